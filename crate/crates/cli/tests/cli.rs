//! End-to-end runs of the `trade` binary.

use std::process::{Command, Output};

fn trade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trade")).args(args).env("TRADE_THREADS", "2").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn kappa_prints_a_csv_table() {
    let o = trade(&["kappa", "--n", "3", "--k", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,k,exponent,kappa,angle_bound,eps_angle,eps_norm");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], ["3", "20", "8"]);
    let kappa: f64 = row[3].parse().unwrap();
    assert!(kappa >= 2f64.sqrt());
    assert!(lines.next().is_none());
}

#[test]
fn bench_then_certify_saved_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = trade(&[
        "bench", "--algo", "stcr,random", "--n", "3", "--scenarios", "2", "--budget", "30", "--mode", "discrete",
        "--out", out, "--save-runs",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("curves.csv").exists() && dir.path().join("curves.json").exists());
    let csv = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    // header, column names, then 2 algorithms x 3 kinds x 30 offers
    assert_eq!(csv.lines().count(), 2 + 2 * 3 * 30);
    assert!(stdout(&o).lines().any(|l| l.starts_with("stcr ")));

    let run = dir.path().join("runs").join("stcr-0000.json");
    let o = trade(&["certify", "--transcript", run.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(report["eps_source"], "auto");
    assert_eq!(o.status.success(), report["pareto"]["certified"].as_bool().unwrap());
}

#[test]
fn bad_arguments_fail() {
    assert!(!trade(&["bench", "--algo", "nope"]).status.success());
    assert!(!trade(&["kappa", "--n", "1..0"]).status.success());
    let o = trade(&["certify", "--transcript", "/nonexistent/run.json"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/run.json"));
}
