use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn spinlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinlab")).args(args).output().expect("binary runs")
}

fn manifest(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON manifest")
}

#[test]
fn help_lists_subcommands_and_flags() {
    let out = spinlab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for word in ["gap", "sample", "mix", "partition", "ci", "censor-check", "acceptance", "--seed", "--jobs"] {
        assert!(text.contains(word), "help lacks {word}");
    }
    let sub = spinlab(&["sample", "--help"]);
    let text = String::from_utf8_lossy(&sub.stdout);
    for flag in ["--model", "--graph", "--partition", "--chain", "--eps", "--t0", "--t1", "--c-const"] {
        assert!(text.contains(flag), "sample help lacks {flag}");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(spinlab(&["gap", "--bogus"]).status.code(), Some(2));
    assert_eq!(spinlab(&["acceptance", "--suite", ""]).status.code(), Some(2));
    assert_eq!(spinlab(&["acceptance", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(spinlab(&["gap", "--graph", "cycle:5", "--model", "hardcore:x"]).status.code(), Some(2));
}

#[test]
fn infeasible_model_exits_3() {
    let out = spinlab(&["gap", "--graph", "path:2", "--model", "coloring:1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gap_single_vertex_and_disconnected_support() {
    let m = manifest(&spinlab(&["gap", "--graph", "path:1", "--model", "hardcore:1"]));
    assert_eq!(m["outcome"]["rows"][0]["t_rel"], 1.0);
    // blocked proper 2-colourings of an even cycle: Glauber cannot move
    let out = spinlab(&["gap", "--graph", "cycle:4", "--model", "coloring:2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(manifest(&out)["outcome"]["rows"][0]["t_rel"], "inf");
}

#[test]
fn cycle_sweep_gaps_are_monotone() {
    let mut args = vec!["gap", "--model", "hardcore:2"];
    let specs: Vec<String> = (4..=12).map(|n| format!("cycle:{n}")).collect();
    for s in &specs {
        args.push("--graph");
        args.push(s);
    }
    let m = manifest(&spinlab(&args));
    let gaps: Vec<f64> = m["outcome"]["rows"].as_array().unwrap().iter().map(|r| r["gap"].as_f64().unwrap()).collect();
    assert_eq!(gaps.len(), 9);
    // odd and even cycles alternate; each parity class is strictly decreasing
    for parity in [0, 1] {
        let class: Vec<f64> = gaps.iter().skip(parity).step_by(2).copied().collect();
        assert!(class.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }
}

#[test]
fn same_seed_reproduces_samples() {
    let args = ["--seed", "11", "sample", "--graph", "cycle:6", "--model", "hardcore:1", "--chain", "glauber", "--samples", "300", "--steps", "50"];
    let a = manifest(&spinlab(&args));
    let b = manifest(&spinlab(&args));
    assert_eq!(a["outcome"]["samples_sha256"], b["outcome"]["samples_sha256"]);
    assert_eq!(a["config_hash"], b["config_hash"]);
    let mut other = args;
    other[1] = "12";
    assert_ne!(manifest(&spinlab(&other))["outcome"]["samples_sha256"], a["outcome"]["samples_sha256"]);
    // thread count does not change the stream
    let mut with_jobs = vec!["--jobs", "2"];
    with_jobs.extend_from_slice(&args);
    assert_eq!(manifest(&spinlab(&with_jobs))["outcome"]["samples_sha256"], a["outcome"]["samples_sha256"]);
}

#[test]
fn golden_manifest() {
    let out = spinlab(&[
        "--seed", "5", "sample", "--graph", "path:6", "--model", "hardcore:1", "--chain", "simdownup", "--partition", "mod:3",
        "--samples", "200",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut m = manifest(&out);
    m.as_object_mut().unwrap().remove("wall_clock_seconds");
    let text = serde_json::to_string_pretty(&m).unwrap() + "\n";
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sample_simdownup.json");
    if !path.exists() {
        std::fs::write(&path, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn other_subcommands_run() {
    let mix = spinlab(&["mix", "--graph", "path:4", "--model", "hardcore:1", "--eps", "0.1"]);
    assert_eq!(mix.status.code(), Some(0));
    assert!(manifest(&mix)["outcome"]["t_mix"].as_u64().unwrap() >= 1);

    let part = spinlab(&["--seed", "3", "partition", "--graph", "regular:60,12", "--k", "3", "--xi", "1"]);
    assert_eq!(part.status.code(), Some(0));
    assert_eq!(manifest(&part)["outcome"]["degree_check"]["ok"], true);
    let hopeless = spinlab(&["partition", "--graph", "complete:12", "--k", "4", "--xi", "0.01"]);
    assert_eq!(hopeless.status.code(), Some(1));

    let ci = spinlab(&["ci", "--graph", "path:4", "--model", "two_spin:1,1,2", "--samples", "200", "--target", "1.5"]);
    assert_eq!(ci.status.code(), Some(0));
    assert_eq!(manifest(&ci)["outcome"]["max_ratio"], 1.0);

    let cen = spinlab(&["censor-check", "--graph", "kbip:1,2", "--model", "hardcore:1", "--schedule-len", "8"]);
    assert_eq!(cen.status.code(), Some(0));

    let acc = spinlab(&["acceptance", "--suite", "oracle"]);
    assert_eq!(acc.status.code(), Some(0));
    let bad = spinlab(&["acceptance", "--suite", "oracle", "--inject-fault", "1"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("criterion  1 FAIL"));
    assert_eq!(manifest(&bad)["outcome"]["failed"], serde_json::json!([1]));
}
