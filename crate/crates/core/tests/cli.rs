//! Runs the `tisp` binary end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn tisp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tisp")).args(args).env_remove("TISP_SEED").output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// y = 3 x0 - 2 x2 on a small design, no noise.
fn sparse_data(dir: &Path) -> PathBuf {
    let mut body = String::from("x0,x1,x2,x3,y\n");
    for i in 0..30 {
        let row: Vec<f64> = (0..4).map(|j| (((i * 7 + j * 13) % 17) as f64 - 8.0) / 4.0).collect();
        let y = 3.0 * row[0] - 2.0 * row[2];
        body.push_str(&format!("{},{},{},{},{}\n", row[0], row[1], row[2], row[3], y));
    }
    write(dir, "sparse.csv", &body)
}

#[test]
fn solve_json_recovers_support() {
    let dir = tempfile::tempdir().unwrap();
    let data = sparse_data(dir.path());
    let out = tisp(&["solve", "--data", data.to_str().unwrap(), "--rule", "hard", "--lambda", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let beta: Vec<f64> = v["beta_hat"].as_array().unwrap().iter().map(|b| b.as_f64().unwrap()).collect();
    assert_eq!(beta.len(), 4);
    assert!((beta[0] - 3.0).abs() < 1e-6 && (beta[2] + 2.0).abs() < 1e-6, "{beta:?}");
    assert_eq!((beta[1], beta[3]), (0.0, 0.0));
    assert_eq!(v["converged"], Value::Bool(true));
}

#[test]
fn solve_csv_has_one_row_per_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let data = sparse_data(dir.path());
    let out = tisp(&["--format", "csv", "solve", "--data", data.to_str().unwrap(), "--rule", "soft", "--lambda", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,beta");
    assert_eq!(lines.len(), 5);
}

#[test]
fn errors_are_json_on_stderr_with_class_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "1,2,3\n4,oops,6\n");
    let out = tisp(&["solve", "--data", bad.to_str().unwrap(), "--rule", "soft", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["class"], "data");
    assert!(v["error"]["message"].as_str().unwrap().contains('2'));

    let out = tisp(&["solve", "--data", bad.to_str().unwrap(), "--rule", "nope", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = sparse_data(dir.path());
    let target = dir.path().join("fit.json");
    let out = tisp(&["--out", target.to_str().unwrap(), "solve", "--data", data.to_str().unwrap(), "--rule", "scad:3.7", "--lambda", "1"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(&target).unwrap()).unwrap();
    assert!(v["objective"].is_number());
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let run = |seed: &str| {
        let out = tisp(&["--format", "csv", "--seed", seed, "simulate", "--preset", "example1", "--sigma", "1", "--reps", "4", "--methods", "hard"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let a = run("3");
    assert_eq!(a, run("3"));
    assert_ne!(a, run("4"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("cell,method,Test-err,Test-err-SE,Spar-err,Prop-Z,Prop-NZ,failed\n"));
}

#[test]
fn bounds_report_probability_in_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let design = write(dir.path(), "x.csv", "1,1\n1,-1\n1,1\n1,-1\n");
    let out = tisp(&["bounds", "--theorem", "2", "--design", design.to_str().unwrap(), "--beta", "2,0", "--sigma", "0.1", "--tau", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["quantities"]["kappa"].as_f64(), Some(0.0));
    // M = τ / (√n σ)
    assert!((v["bound"]["intermediates"]["M"].as_f64().unwrap() - 2.5).abs() < 1e-12);
    let p = v["bound"]["success_lower"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}
