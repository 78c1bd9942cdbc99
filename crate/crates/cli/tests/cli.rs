use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hyperfill_core::filling::FillingFile;
use hyperfill_core::verify::ExperimentReport;
use tempfile::TempDir;

const INTERVAL_CANTOR: &str =
    r#"{"kind": "cube", "dim": 1, "level": 8, "subset": {"kind": "ifs", "preset": "cantor", "depth": 4}}"#;

fn hyperfill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperfill"))
        .args(args)
        .env_remove("HYPERFILL_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn docs_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../docs/configs")
        .join(name)
}

fn samples(n: usize, f: impl Fn(usize) -> f64) -> String {
    serde_json::to_string(&(0..n).map(f).collect::<Vec<f64>>()).unwrap()
}

#[test]
fn norm_of_a_constant_is_zero() {
    let dir = TempDir::new().unwrap();
    let space = write(&dir, "space.json", INTERVAL_CANTOR);
    let filling = dir.path().join("filling.json");
    let out = hyperfill(&["filling", "build", "--space", s(&space), "--nmin", "0", "--nmax", "5", "--out", s(&filling)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let f = write(&dir, "f.json", &samples(256, |_| 3.0));
    for kind in ["besov", "triebel", "nonhom_besov"] {
        let out = hyperfill(&[
            "norm", "eval", "--filling", s(&filling), "--function", s(&f), "--kind", kind,
            "--s", "0.5", "--p", "2", "--q", "inf",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let expected = if kind == "nonhom_besov" { 3.0 } else { 0.0 };
        assert!((v["value"].as_f64().unwrap() - expected).abs() < 1e-12, "{kind}: {v}");
        assert_eq!(v["variant"], "indicator");
        assert_eq!(v["window"]["hi"], 5);
    }
}

#[test]
fn filling_files_round_trip_and_audit() {
    let dir = TempDir::new().unwrap();
    let space = write(&dir, "space.json", INTERVAL_CANTOR);
    let filling = dir.path().join("nested.json");
    let out = hyperfill(&[
        "filling", "build", "--space", s(&space), "--nmin", "0", "--nmax", "5", "--subset", "--out", s(&filling),
    ]);
    assert!(out.status.success());
    let file: FillingFile = serde_json::from_str(&fs::read_to_string(&filling).unwrap()).unwrap();
    assert!(file.nested.is_some());
    file.load().unwrap();

    let out = hyperfill(&["filling", "audit", s(&filling)]);
    assert!(out.status.success());
    let audit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(audit["ambient"]["separation_ok"], true);
    assert!(audit["trace"].is_object());

    let out = hyperfill(&["calculus", "check-telescoping", s(&filling), "--trials", "10"]);
    assert!(out.status.success());
    let tele: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(tele["max_relative_error"].as_f64().unwrap() < 1e-12);
    assert!(tele["partition_sum_error"].as_f64().unwrap() < 1e-12);
}

#[test]
fn verify_with_docs_config_matches_the_report_schema() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("report.json");
    let csv_path = dir.path().join("report.csv");
    let config = docs_config("porosity_qindependence.json");
    let out = hyperfill(&[
        "verify", "audit_porosity_qindependence", "--config", s(&config), "--out", s(&out_path), "--csv", s(&csv_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: ExperimentReport = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report.experiment_id, "porosity_qindependence");
    assert_eq!(report.resolutions, vec![6, 8]);
    assert_eq!(report.rng_seed, 4);
    assert!(report.verdict("porosity_constant").unwrap().passed);
    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("experiment_id,label,resolution,status,metric,value\n"));
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "bad.json", r#"{"space": {"kind": "cube", "dim": 1, "level": 6}, "colour": 1}"#);
    let out_path = dir.path().join("report.json");
    let out = hyperfill(&["verify", "prop52", "--config", s(&config), "--out", s(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());
    assert!(!out.stderr.is_empty());

    let out = hyperfill(&["verify", "no_such_audit", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(2));
    let out = hyperfill(&["norm", "eval", "--kind", "besov"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gate_rejections_exit_3_without_output() {
    let dir = TempDir::new().unwrap();
    let space = write(&dir, "space.json", INTERVAL_CANTOR);
    let f = write(&dir, "f.json", &samples(256, |i| i as f64 / 256.0));
    let out_path = dir.path().join("trace.json");
    let out = hyperfill(&[
        "trace", "run", "--space", s(&space), "--theorem", "1", "--s", "0.5", "--p", "0.7", "--nmax", "5",
        "--f", s(&f), "--out", s(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_path.exists());

    let interval = write(&dir, "interval.json", r#"{"kind": "cube", "dim": 1, "level": 6, "subset": {"kind": "explicit", "indices": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62, 63], "lambda": 1}}"#);
    let g = write(&dir, "g.json", &samples(64, |i| i as f64 / 64.0));
    let out = hyperfill(&[
        "trace", "run", "--space", s(&interval), "--theorem", "2", "--s", "0.5", "--p", "4", "--nmin", "-1",
        "--nmax", "4", "--f", s(&g),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn trace_and_extension_runs() {
    let dir = TempDir::new().unwrap();
    let space = write(&dir, "space.json", INTERVAL_CANTOR);
    let f = write(&dir, "f.json", &samples(256, |i| (i as f64 / 256.0).powi(2)));
    let out = hyperfill(&[
        "trace", "run", "--space", s(&space), "--theorem", "1", "--s", "0.8", "--p", "4", "--q", "2", "--nmax", "5",
        "--f", s(&f),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["trace_samples"].as_array().unwrap().len(), 16);
    assert_eq!(v["theorem"], "thm1");

    let ff = write(&dir, "ff.json", &samples(16, |i| i as f64));
    let out = hyperfill(&[
        "trace", "run", "--space", s(&space), "--theorem", "3", "--s", "1", "--p", "2", "--nmax", "5",
        "--f", s(&ff), "--direction", "extend",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["extended_samples"].as_array().unwrap().len(), 256);
    assert!(v["certificate"]["max_violation"].as_f64().unwrap() <= 0.0);
}

#[test]
fn reruns_are_byte_identical_and_the_seed_variable_overrides() {
    let config = docs_config("equiv_26.json");
    let run = |threads: &str, seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hyperfill"));
        cmd.args(["--threads", threads, "verify", "equiv_26", "--config", s(&config)]);
        match seed {
            Some(v) => cmd.env("HYPERFILL_SEED", v),
            None => cmd.env_remove("HYPERFILL_SEED"),
        };
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        out.stdout
    };
    let a = run("1", None);
    assert_eq!(a, run("3", None));
    let seeded = run("2", Some("77"));
    assert_ne!(a, seeded);
    let report: ExperimentReport = serde_json::from_slice(&seeded).unwrap();
    assert_eq!(report.rng_seed, 77);
}
