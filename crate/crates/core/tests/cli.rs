use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn yamabe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yamabe")).args(args).output().unwrap()
}

fn solve_to(problem: &Path, out: &Path) -> Output {
    yamabe(&["solve", problem.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn as_f64(v: &Value) -> f64 {
    v.to_string().parse().unwrap()
}

#[test]
fn solve_k2_rescale_gives_unit_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k2.json");
    let res = solve_to(&corpus("k2_rescale.json"), &out);
    assert_eq!(res.status.code(), Some(0));
    let cert: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for id in ["a", "b"] {
        assert!((as_f64(&cert["solution"][id]) - 1.0).abs() <= 1e-10);
    }
    assert!((as_f64(&cert["lambda"]) + 1.0).abs() <= 1e-10);
    assert!(as_f64(&cert["residual_max"]) <= 1e-10);
    assert_eq!(cert["mode"], "rescale");
    assert_eq!(cert["checks"].as_array().unwrap().len(), 10);
}

#[test]
fn summary_numbers_appear_in_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let res = solve_to(&corpus("random6_edge_p2_5.json"), &out);
    assert_eq!(res.status.code(), Some(0));
    let summary = String::from_utf8(res.stdout).unwrap();
    let cert = std::fs::read_to_string(&out).unwrap();
    let fields: Vec<&str> = summary.split_whitespace().filter_map(|t| t.split_once('=')).map(|(_, v)| v).collect();
    assert!(fields.len() >= 6);
    for v in fields.into_iter().filter(|v| v.parse::<f64>().is_ok()) {
        assert!(cert.contains(v), "{v} missing from certificate");
    }
}

#[test]
fn certificate_goes_to_stdout_without_out() {
    let res = yamabe(&["solve", corpus("k2_mu_form.json").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let cert: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(cert["mode"], "mu_form");
}

#[test]
fn tampered_certificate_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let problem = corpus("k3_rescale.json");
    assert_eq!(solve_to(&problem, &out).status.code(), Some(0));
    let mut cert: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let a = as_f64(&cert["solution"]["a"]);
    cert["solution"]["a"] = serde_json::json!(a + 1e-2);
    let tampered = dir.path().join("t.json");
    std::fs::write(&tampered, serde_json::to_string_pretty(&cert).unwrap()).unwrap();
    let res = yamabe(&["verify", problem.to_str().unwrap(), "--solution", tampered.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));
    let report = String::from_utf8(res.stdout).unwrap();
    assert!(report.contains("euler_lagrange_residual") && report.contains("verify failed"));
}

#[test]
fn certificate_for_another_problem_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    assert_eq!(solve_to(&corpus("k2_rescale.json"), &out).status.code(), Some(0));
    let other = corpus("k2_mu_form.json");
    let res = yamabe(&["verify", other.to_str().unwrap(), "--solution", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn invalid_inputs_exit_2() {
    assert_eq!(yamabe(&["solve", "missing.json"]).status.code(), Some(2));
    assert_eq!(yamabe(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(corpus("k2_rescale.json")).unwrap();
    std::fs::write(&bad, text.replacen("\"mode\"", "\"extra\": 1, \"mode\"", 1)).unwrap();
    let res = yamabe(&["solve", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8(res.stderr).unwrap().contains("extra"));
    std::fs::write(&bad, text.replace("\"w\": 1.0", "\"w\": -1.0")).unwrap();
    assert_eq!(yamabe(&["solve", bad.to_str().unwrap()]).status.code(), Some(2));
    let big = corpus("random8_gamma_normalized.json");
    assert_eq!(yamabe(&["oracle", big.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn exhausted_budget_exits_3() {
    let p = corpus("random6_edge_p2_5.json");
    let res = yamabe(&["solve", p.to_str().unwrap(), "--max-iter", "2", "--restarts", "0"]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn gradcheck_and_oracle_succeed() {
    let p = corpus("path5_gamma_p3.json");
    let res = yamabe(&["gradcheck", p.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(res.status.code(), Some(0));
    assert!(String::from_utf8(res.stdout).unwrap().starts_with("gradcheck ok"));

    let p = corpus("random3_oracle.json");
    let res = yamabe(&["oracle", p.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let out = String::from_utf8(res.stdout).unwrap();
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("oracle solutions="));
    let first: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(first["u"].as_object().unwrap().len(), 3);
}
