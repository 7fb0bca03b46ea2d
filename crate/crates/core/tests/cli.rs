use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stark-zeeman"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_invariants_ksgeom() {
    let o = bin(&["check-invariants", "--module", "ksgeom"]);
    assert_eq!(o.status.code(), Some(0));
    let r = stdout_json(&o);
    assert_eq!(r[0]["passed"], r[0]["total"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ksgeom"));
}

#[test]
fn find_orbit_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("orbit.json");
    let csv = dir.path().join("orbit.csv");
    let o = bin(&[
        "find-orbit",
        "--system",
        "kepler",
        "--seed",
        "circle:R=0.35",
        "--samples",
        "128",
        "--out",
        path(&json),
        "--csv",
        path(&csv),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let s = stdout_json(&o);
    let r = (4.0 * std::f64::consts::PI.powi(2)).powf(-1.0 / 3.0);
    assert!((s["norm_sqr"].as_f64().unwrap() - r).abs() < 1e-6);
    assert_eq!(s["verified"], true);
    let q_max = s["q_max"].as_f64().unwrap();
    assert!((q_max - r).abs() < 1e-6, "{q_max}");

    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(saved["loop"]["samples"].is_array());
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("t,q1,q2,q3"));

    let v = bin(&["verify", "--system", "kepler", "--orbit", path(&json)]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(stdout_json(&v)["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = bin(&[
        "simulate",
        "--system",
        "cr3bp",
        "mu=0.01",
        "--q0",
        "0.08",
        "0",
        "0.01",
        "--v0",
        "0",
        "0.2",
        "0",
        "--tspan",
        "0",
        "1",
        "--out",
        path(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().count() > 10);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"system": ["kepler"], "q0": [1, 0, 0], "v0": [0, 1, 0], "tspan": [0, 1]}"#,
    )
    .unwrap();
    let a = bin(&["simulate", "--config", path(&cfg)]);
    let b = bin(&["simulate", "--config", path(&cfg), "--tspan", "0", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert_ne!(stdout_json(&a), stdout_json(&b));
}

#[test]
fn config_errors_exit_3() {
    assert_eq!(
        bin(&["simulate", "--system", "nope"]).status.code(),
        Some(3)
    );
    assert_eq!(
        bin(&["simulate", "--system", "kepler", "--tol", "-1"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        bin(&["find-orbit", "--system", "kepler"]).status.code(),
        Some(3)
    );
    assert_eq!(bin(&["bogus"]).status.code(), Some(3));
}

#[test]
fn identical_runs_are_bit_identical() {
    let args = [
        "find-orbit",
        "--system",
        "rkp",
        "--seed",
        "circle:R=0.6,plane=1k,noise=0.02",
        "--rng-seed",
        "4",
        "--samples",
        "64",
    ];
    assert_eq!(bin(&args).stdout, bin(&args).stdout);
}

#[test]
fn empty_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = dir.path().join("jobs.json");
    std::fs::write(&jobs, "[]").unwrap();
    assert_eq!(
        bin(&["sweep", "--jobs", path(&jobs)]).status.code(),
        Some(3)
    );
}

#[test]
fn mixed_sweep_keeps_good_results() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = dir.path().join("jobs.json");
    let mut list: Vec<Value> = (0..8)
        .map(|k| {
            serde_json::json!({
                "command": "find-orbit",
                "system": ["kepler"],
                "seed": format!("circle:R={},noise=0.01,seed={k}", 0.4 + 0.05 * k as f64),
                "samples": 64,
            })
        })
        .collect();
    list.push(serde_json::json!({"command": "simulate", "system": ["kepler"], "tol": 0.0}));
    std::fs::write(&jobs, serde_json::to_string(&list).unwrap()).unwrap();
    let o = bin(&["sweep", "--jobs", path(&jobs)]);
    assert_eq!(o.status.code(), Some(3));
    let r = stdout_json(&o);
    let done = r["jobs"].as_array().unwrap();
    assert_eq!(done.len(), 9);
    let norms: Vec<f64> = done[..8]
        .iter()
        .map(|j| j["summary"]["norm_sqr"].as_f64().unwrap())
        .collect();
    for n in &norms {
        assert!((n - norms[0]).abs() < 1e-6);
    }
    assert!(done[8]["error"].is_string());
}
