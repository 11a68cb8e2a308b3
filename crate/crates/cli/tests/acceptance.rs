//! Runs every acceptance criterion at full size and prints one line each.

use spinlab::acceptance::run_suite;

fn main() {
    let reports = run_suite("all", 20261016, None).expect("suite exists");
    for r in &reports {
        println!("{}", r.line());
    }
    let failed: Vec<u32> = reports.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", reports.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
