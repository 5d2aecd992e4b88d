use std::path::Path;
use std::process::Command;

use clap::Parser;
use stochplan::driver::RunConfig;
use stochplan_cli::{Cli, Command as Sub, RunArgs};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochplan"))
}

fn generate(dir: &Path, args: &[&str]) -> std::path::PathBuf {
    let path = dir.join("inst.json");
    let status = bin()
        .args(["generate", "--out"])
        .arg(&path)
        .args(args)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    path
}

fn parsed_run(args: &[&str]) -> RunArgs {
    let mut argv = vec!["stochplan", "solve", "x.json"];
    argv.extend_from_slice(args);
    match Cli::try_parse_from(argv).unwrap().command {
        Sub::Solve { run, .. } => run,
        _ => unreachable!(),
    }
}

#[test]
fn flag_defaults_are_run_config_defaults() {
    assert_eq!(parsed_run(&[]).resolve().unwrap(), RunConfig::default());
}

#[test]
fn plain_method_needs_no_initialize_flag() {
    let c = parsed_run(&["--method", "none"]).resolve().unwrap();
    assert!(!c.initializes());
    assert!(RunConfig::default().initializes());
    assert!(!parsed_run(&["--no-initialize"]).resolve().unwrap().initializes());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "method = \"level\"\nbeta = 0.5\neta = 7\n").unwrap();
    let c = parsed_run(&["--config", cfg.to_str().unwrap(), "--beta", "0.3", "--eta", "none"])
        .resolve()
        .unwrap();
    assert_eq!(c.method.to_string(), "level");
    assert_eq!(c.beta, 0.3);
    assert_eq!(c.eta, None);
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().args(["solve", "x.json", "--method", "level", "--beta", "1.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));

    let out = bin().args(["solve", "x.json", "--method", "none", "--initialize"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initialization"));

    let out = bin().args(["solve", "x.json", "--initialize", "--no-initialize"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().args(["solve", "x.json", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["solve", "x.json", "--method", "bundle"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), &["--seed", "7", "--scenarios", "4", "--time-steps", "48", "--years", "1"]);
    let out = dir.path().join("run");
    let status = bin()
        .arg("solve")
        .arg(&inst)
        .args(["--method", "trust", "--epsilon", "0.01", "--eta", "20", "--schedule", "log", "--initialize", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert!(sol["gap"].as_f64().unwrap() <= 0.01);
    assert_eq!(sol["converged"], serde_json::Value::Bool(true));
    for key in ["objective", "lower_bound", "expansion", "capacities", "iterations"] {
        assert!(sol.get(key).is_some(), "{key}");
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with(
        "iter,t_total_s,t_master_s,t_sps_s,lb,ub,gap,sp_tol,cuts_added,cuts_deleted,cuts_total,serious,mu,level,psi\n"
    ));
}

#[test]
fn iteration_cap_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), &["--seed", "3", "--scenarios", "3", "--techs", "4", "--time-steps", "48", "--years", "1"]);
    let status = bin()
        .arg("solve")
        .arg(&inst)
        .args(["--method", "none", "--max-iters", "2", "--out"])
        .arg(dir.path().join("run"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn reduce_weights_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), &["--seed", "5", "--scenarios", "8", "--time-steps", "24", "--years", "1"]);
    let out = dir.path().join("red");
    let status = bin().arg("reduce").arg(&inst).args(["--m", "3", "--out"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let mut rd = csv::Reader::from_path(out.join("nodes.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["scenario", "group", "weight"]);
    let total: f64 = rd.records().map(|r| r.unwrap()[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let rd = csv::Reader::from_path(out.join("edges.csv")).unwrap().headers().unwrap().clone();
    assert_eq!(rd, vec!["a", "b", "distance", "similarity"]);
    assert!(out.join("reduced.json").exists());
}

#[test]
fn benchmark_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), &["--seed", "7", "--scenarios", "2", "--time-steps", "24", "--years", "1"]);
    let out = dir.path().join("bench");
    let status = bin().arg("benchmark").arg(&inst).args(["--out"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let mut rd = csv::Reader::from_path(out.join("report.csv")).unwrap();
    let rows: Vec<_> = rd.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 1);
}
