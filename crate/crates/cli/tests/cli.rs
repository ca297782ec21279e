use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use structsel_core::selection::KappaCalibration;

const SMALL_D1: &str = r#"{
  "dim": 1,
  "points_per_axis": 401,
  "theta_grid": {"dim": 1, "n_angles": 1, "n_h": 4, "h_floor_cells": 4},
  "function": {"family": "single-index", "dim": 1},
  "n_rep": 10
}"#;

fn structsel(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_structsel"));
    cmd.args(args).env_remove("STRUCTSEL_OUT");
    if let Some(dir) = out_env {
        cmd.env("STRUCTSEL_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_kernels_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_D1);
    let out = tmp.path().join("run");
    let res = structsel(
        &[
            "--config",
            &cfg,
            "--command",
            "verify-kernels",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "verify-kernels");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["delta_exponent"], 36.0);
    assert!(read_json(&out.join("report.json"))["pass"].as_bool().unwrap());
    for t in ["kernel_catalog", "kernel_checks", "moments", "symmetry"] {
        assert!(out.join("tables").join(format!("{t}.csv")).exists(), "{t}");
    }
}

#[test]
fn environment_sets_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_D1);
    let out = tmp.path().join("from-env");
    let res = structsel(
        &["--config", &cfg, "--command", "bench-sandwich", "--p", "inf"],
        Some(&out),
    );
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let table = std::fs::read_to_string(out.join("tables/sandwich.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.split(',').nth(1) == Some("inf")));
}

#[test]
fn calibration_file_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &SMALL_D1.replace("\"n_rep\": 10", "\"n_cal\": 100, \"delta\": 0.2"),
    );
    let out = tmp.path().join("cal");
    let res = structsel(
        &[
            "--config",
            &cfg,
            "--command",
            "calibrate",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let cal = KappaCalibration::from_json(&std::fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    assert_eq!(cal.n_cal, 100);
    assert_eq!(cal.delta, 0.2);
    assert_eq!(cal.kappa, cal.quantile_s1.unwrap().max(cal.quantile_s2.unwrap()));
    let samples = std::fs::read_to_string(out.join("tables/calibration_samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 101);
}

#[test]
fn invalid_config_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\n  \"dim\": 1,\n  \"no_such_field\": 3\n}");
    let res = structsel(&["--config", &cfg, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn too_few_calibration_replications_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL_D1.replace("\"n_rep\": 10", "\"n_cal\": 50"));
    let res = structsel(
        &[
            "--config",
            &cfg,
            "--command",
            "select",
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn failed_check_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_D1.replace("\"n_rep\": 10", "\"tolerances\": {\"norm_bound_slack\": -0.5}");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("fail");
    let res = structsel(
        &[
            "--config",
            &cfg,
            "--command",
            "verify-kernels",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("||K||_1"), "{err}");
    assert!(!read_json(&out.join("report.json"))["failures"]
        .as_array()
        .unwrap()
        .is_empty());
}
