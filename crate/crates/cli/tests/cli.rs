use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaoscalc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn json_out(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const RUNNING: &str = r#"{"kind":"dense","entries":[[0,1,2.0],[1,1,3.0]]}"#;
const DELTA_1: &str = r#"{"truncation":3,"coefficients":[[[1],1.0,0.0]]}"#;

#[test]
fn gwn_scales_singleton_by_theta() {
    let dir = TempDir::new().unwrap();
    let (w, f, e) = (
        write(&dir, "w.json", RUNNING),
        write(&dir, "f.json", DELTA_1),
        write(&dir, "e.json", r#"{"op":"gwn"}"#),
    );
    let v = json_out(&run(&["apply", "--expr", s(&e), "--functional", s(&f), "--weight", s(&w)]));
    assert_eq!(v["coefficients"], serde_json::json!([[[1], 5.0, 0.0]]));
}

#[test]
fn identity_expression_round_trips() {
    let dir = TempDir::new().unwrap();
    let text = r#"{"truncation":4,"coefficients":[[[],0.5,-0.25],[[0,3],1e-300,3.141592653589793]]}"#;
    let f = write(&dir, "f.json", text);
    let e = write(&dir, "e.json", r#"{"op":"identity"}"#);
    let out = dir.path().join("out.json");
    let status = run(&["apply", "--expr", s(&e), "--functional", s(&f), "--out", s(&out)]);
    assert!(status.status.success());
    let back: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(back, serde_json::from_str::<Value>(text).unwrap());
}

#[test]
fn out_of_range_index_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "f.json", DELTA_1);
    let e = write(&dir, "e.json", r#"{"op":"create","k":3}"#);
    let out = run(&["apply", "--expr", s(&e), "--functional", s(&f)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gwn_without_weight_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "f.json", DELTA_1);
    let e = write(&dir, "e.json", r#"{"op":"gwn"}"#);
    assert_eq!(run(&["apply", "--expr", s(&e), "--functional", s(&f)]).status.code(), Some(2));
}

#[test]
fn norms_of_basis_and_empty_functionals() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "f.json", DELTA_1);
    let v = json_out(&run(&["norms", "--functional", s(&f), "--p", "2"]));
    assert_eq!(v[0]["norm"], 4.0);
    assert_eq!(v[0]["dual_norm"], 0.25);

    let f = write(&dir, "e.json", r#"{"truncation":2,"coefficients":[[[],1.0,0.0]]}"#);
    let v = json_out(&run(&["norms", "--functional", s(&f), "--p", "0,1,2"]));
    for row in v.as_array().unwrap() {
        assert_eq!((row["norm"].as_f64(), row["dual_norm"].as_f64()), (Some(1.0), Some(1.0)));
    }

    let f = write(&dir, "z.json", r#"{"truncation":2,"coefficients":[]}"#);
    let v = json_out(&run(&["norms", "--functional", s(&f), "--p", "1"]));
    assert_eq!((v[0]["norm"].as_f64(), v[0]["dual_norm"].as_f64()), (Some(0.0), Some(0.0)));
}

#[test]
fn simulate_exact_and_sampled() {
    let v = json_out(&run(&["simulate", "--n", "3", "--exact", "--samples", "2000", "--seed", "7"]));
    assert_eq!(v["exact"]["identity_residual"], 0.0);
    assert_eq!(v["exact"]["pass"], true);
    assert_eq!(v["monte_carlo"]["seed"], 7);
    assert_eq!(v["monte_carlo"]["mean"].as_array().unwrap().len(), 8);

    let dir = TempDir::new().unwrap();
    let theta = write(&dir, "theta.json", "[0.25, 0.3333333333333333, 0.6666666666666666, 0.9]");
    let v = json_out(&run(&["simulate", "--n", "4", "--theta", s(&theta)]));
    assert!(v["exact"]["identity_residual"].as_f64().unwrap() <= 1e-12);
    assert!(v.get("monte_carlo").is_none());

    assert_eq!(run(&["simulate", "--n", "3", "--theta", "1.5"]).status.code(), Some(2));
}

#[test]
fn qms_annihilates_identity() {
    let dir = TempDir::new().unwrap();
    let w = write(&dir, "w.json", RUNNING);
    let rows: Vec<Vec<(f64, f64)>> = (0..4)
        .map(|i| (0..4).map(|j| (if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    let x = write(&dir, "x.json", &serde_json::to_string(&rows).unwrap());
    let v = json_out(&run(&["qms", "--weight", s(&w), "--x", s(&x), "--n", "2"]));
    for row in v.as_array().unwrap() {
        for z in row.as_array().unwrap() {
            assert_eq!(z, &serde_json::json!([0.0, 0.0]));
        }
    }
    assert_eq!(run(&["qms", "--weight", s(&w), "--x", s(&x), "--n", "1"]).status.code(), Some(2));
}

#[test]
fn verify_reports_are_deterministic_apart_from_timing() {
    let dir = TempDir::new().unwrap();
    let args = |out: &Path| {
        run(&["verify", "--n", "4", "--samples", "4000", "--only", "commutation", "--out", s(out)])
    };
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    assert!(args(&a).status.success());
    assert!(args(&b).status.success());
    let strip = |p: &Path| {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    let report = strip(&a);
    assert_eq!(report, strip(&b));
    let families: Vec<_> = report["reports"].as_array().unwrap().iter().map(|r| r["family"].clone()).collect();
    assert_eq!(families, ["commutation-1d", "commutation-2d"]);
    assert_eq!(report["summary"]["pass"], true);
}

#[test]
fn verify_with_user_weight_and_check_prefix() {
    let dir = TempDir::new().unwrap();
    let w = write(&dir, "w.json", RUNNING);
    let out = run(&["verify", "--n", "3", "--weight", s(&w), "--only", "spectral-shifts/add-index"]);
    let v = json_out(&out);
    let checks = v["reports"][0]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["check"].as_str().unwrap().starts_with("spectral-shifts/add-index")));
    assert!(checks.iter().any(|c| c["inputs"]["weight"] == "user"));
}

#[test]
fn verify_input_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"kind":"dense","entries":[[0,0,-1.0]]}"#);
    assert_eq!(run(&["verify", "--weight", s(&bad)]).status.code(), Some(2));
    let garbled = write(&dir, "garbled.json", "{not json");
    assert_eq!(run(&["verify", "--weight", s(&garbled)]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--only", "no-such-family"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--n", "99"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn default_verification_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.json");
    let status = run(&["verify", "--out", s(&out)]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["inputs"]["n"], 8);
    assert_eq!(v["inputs"]["seed"], 42);
    assert!(v["conventions"][0].as_str().unwrap().contains("dual norm"));
}
