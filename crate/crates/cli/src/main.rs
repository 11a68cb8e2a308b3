use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use spinlab::acceptance::run_suite;
use spinlab::args::{Cli, Command};
use spinlab::commands::{cmd_censor_check, cmd_ci, cmd_gap, cmd_mix, cmd_partition, cmd_sample};
use spinlab::manifest::{ManifestBuilder, RunManifest};
use spinlab::{exit, CliError, CliResult};

fn run(cli: &Cli) -> CliResult<RunManifest> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let seed = cli.seed;
    match &cli.command {
        Command::Gap(a) => cmd_gap(seed, a),
        Command::Sample(a) => cmd_sample(seed, a),
        Command::Mix(a) => cmd_mix(seed, a),
        Command::Partition(a) => cmd_partition(seed, a),
        Command::Ci(a) => cmd_ci(seed, a),
        Command::CensorCheck(a) => cmd_censor_check(seed, a),
        Command::Acceptance(a) => {
            let mb = ManifestBuilder::start("acceptance", seed, serde_json::to_value(a).expect("arguments serialise"));
            let reports = run_suite(&a.suite, seed, a.inject_fault)?;
            for r in &reports {
                eprintln!("{}", r.line());
            }
            let pass = reports.iter().all(|r| r.pass);
            let failed: Vec<u32> = reports.iter().filter(|r| !r.pass).map(|r| r.id).collect();
            Ok(mb.finish(json!({ "criteria": reports, "failed": failed }), pass))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::PASS } as u8);
        }
    };
    match run(&cli) {
        Ok(m) => {
            println!("{}", m.to_json());
            ExitCode::from(if m.pass { exit::PASS } else { exit::FAILURE } as u8)
        }
        Err(e) => {
            eprintln!("spinlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
