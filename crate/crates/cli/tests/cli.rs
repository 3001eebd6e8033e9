use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ergodic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergodic"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn ergodic")
}

fn summary(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn perron_reports_interior_optimum() {
    let tmp = TempDir::new().unwrap();
    let out = ergodic(tmp.path(), &["--out", "o", "perron"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(&tmp.path().join("o/perron.json"));
    assert_eq!(s["boundary"], false);
    let a = s["optimum"]["alpha_star"].as_f64().unwrap();
    assert!((a - 3.3533).abs() < 1e-3);
    let csv = fs::read_to_string(tmp.path().join("o/perron_curve.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("alpha,lambda,dlambda"));
    assert_eq!(csv.lines().count(), 402);
}

#[test]
fn perron_tail_approaches_tau1() {
    let tmp = TempDir::new().unwrap();
    let out = ergodic(tmp.path(), &["--out", "o", "perron", "--alpha-max", "100"]);
    assert!(out.status.success());
    let s = summary(&tmp.path().join("o/perron.json"));
    let tail = s["lambda_at_alpha_max"].as_f64().unwrap();
    assert!((tail - 0.5).abs() < 0.02, "tail {tail}");
}

#[test]
fn threshold_rates_flag_boundary_optimum() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"kind": "running-example", "tau1": 0.5, "tau2": 1.0, "beta2": 1, "beta3": 2}}"#,
    );
    let out = ergodic(tmp.path(), &["--config", &cfg, "--out", "o", "perron"]);
    assert!(out.status.success());
    let s = summary(&tmp.path().join("o/perron.json"));
    assert_eq!(s["boundary"], true);
    assert_eq!(s["monotonicity"], "increasing-to-tau1");
}

#[test]
fn unknown_config_field_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"bogus": 1}"#);
    let out = ergodic(tmp.path(), &["--config", &cfg, "perron"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn strict_cfl_exits_5() {
    let tmp = TempDir::new().unwrap();
    let out = ergodic(tmp.path(), &["--out", "o", "hjb", "--strict-cfl"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn outputs_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        let out = ergodic(tmp.path(), &["--seed", "11", "--out", dir, "hypotheses"]);
        assert!(out.status.success());
    }
    for name in ["h4_criterion.csv", "h4_checks.csv"] {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    // Summaries differ only in the echoed output directory.
    let strip = |dir: &str| {
        let mut s = summary(&tmp.path().join(dir).join("hypotheses.json"));
        s["config"]["outputs"].take();
        s
    };
    assert_eq!(strip("a"), strip("b"));
}

#[test]
fn json_format_writes_row_objects() {
    let tmp = TempDir::new().unwrap();
    let out = ergodic(
        tmp.path(),
        &["--format", "json", "--out", "o", "perron", "--points", "5"],
    );
    assert!(out.status.success());
    let rows = summary(&tmp.path().join("o/perron_curve.json"));
    assert_eq!(rows.as_array().unwrap().len(), 5);
    assert!(rows[0]["lambda"].is_number());
}

#[test]
fn geometry_accepts_zero_margin() {
    let tmp = TempDir::new().unwrap();
    let out = ergodic(
        tmp.path(),
        &["--out", "o", "geometry", "--delta", "0", "--trials", "10"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(tmp.path().join("o/geometry.json").exists());
}

#[test]
fn particular_solution_on_monotone_rates() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"kind": "running-example", "tau1": 0.5, "tau2": 0.5, "beta2": 1, "beta3": 2},
            "numerics": {"horizon": 5.0}}"#,
    );
    let out = ergodic(
        tmp.path(),
        &[
            "--config",
            &cfg,
            "--out",
            "o",
            "hjb",
            "--particular-solution",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(&tmp.path().join("o/particular.json"));
    assert_eq!(s["passed"], true, "{s}");
}
