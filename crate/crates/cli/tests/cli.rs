//! End-to-end checks of the command-line harness.

use std::process::{Command, Output};

fn hamster(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamster"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_json(args: &[&str]) -> serde_json::Value {
    let out = hamster(args);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON report")
}

#[test]
fn identical_invocations_replay_identically() {
    let args = [
        "run", "--n", "5", "--batch", "4", "--duration", "1.5", "--seed", "11", "--trace",
        "--json",
    ];
    let a = run_json(&args);
    let b = run_json(&args);
    let hash = a["trace_hash"].as_str().expect("trace hash recorded");
    assert_eq!(hash, b["trace_hash"].as_str().unwrap());
    assert_eq!(a["bytes_total"], b["bytes_total"]);
    assert_eq!(a["completed_requests"], b["completed_requests"]);

    let mut other_seed = args;
    other_seed[8] = "12";
    let c = run_json(&other_seed);
    assert_ne!(hash, c["trace_hash"].as_str().unwrap());
}

#[test]
fn fuzz_subcommand_reports_clean_runs() {
    let out = hamster(&["fuzz", "--runs", "4", "--nodes", "3,5"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("4 runs, 0 with violations"), "got: {text}");
}

#[test]
fn invalid_cluster_size_is_a_usage_error() {
    let out = hamster(&["run", "--n", "2", "--duration", "1"]);
    assert_eq!(out.status.code(), Some(2), "a two-node cluster must be rejected");
}

#[test]
fn model_subcommand_prints_round_figures() {
    let out = hamster(&["model", "--n", "9", "--m-bytes", "1e6"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["round", "baseline", "gain"] {
        assert!(text.contains(needle), "missing '{needle}' in: {text}");
    }
}
