mod common;

use std::process::Command;

use common::fixture;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hypersteal")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn steal_prints_a_json_report() {
    let data = fixture("diabetes.csv");
    let (code, stdout, _) = run(&["steal", "--algorithm", "RR", "--data", &data, "--lambda", "0.5"]);
    assert_eq!(code, 0);
    let reports: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let lambda = reports[0]["lambda_hat"]["lambda"].as_f64().unwrap();
    assert!((lambda - 0.5).abs() < 1e-10);
}

#[test]
fn invalid_input_exits_with_two() {
    let data = fixture("diabetes.csv");
    assert_eq!(run(&["steal", "--algorithm", "RR", "--data", &data, "--lambda=-1"]).0, 2);
    assert_eq!(run(&["steal", "--algorithm", "nope", "--data", &data, "--lambda", "1"]).0, 2);
    assert_eq!(run(&["train", "--algorithm", "RR", "--data", "/no/such/file.csv", "--lambda", "1"]).0, 2);
}

#[test]
fn masked_attack_warns_unless_strict() {
    let data = fixture("diabetes.csv");
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("lasso.json");
    let model = model.to_str().unwrap();
    let (code, _, _) = run(&["train", "--algorithm", "LASSO", "--data", &data, "--lambda", "5000", "--out", model]);
    assert_eq!(code, 0);
    let (code, _, stderr) = run(&["steal", "--algorithm", "LASSO", "--data", &data, "--model", model]);
    assert_eq!(code, 0);
    assert!(stderr.contains("warning"));
    let (code, _, _) = run(&["steal", "--algorithm", "LASSO", "--data", &data, "--model", model, "--strict"]);
    assert_eq!(code, 3);
}

#[test]
fn csv_output_has_a_header_and_a_row_per_decimal() {
    let data = fixture("diabetes.csv");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let (code, _, _) = run(&[
        "defend", "--algorithm", "RR", "--data", &data, "--lambda", "1", "--format", "csv", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 6);
}
