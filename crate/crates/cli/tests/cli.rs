use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn opss(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opss"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .env_remove("OPSS_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn run_dir(o: &Output) -> PathBuf {
    assert!(
        o.status.success(),
        "failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    PathBuf::from(String::from_utf8(o.stdout.clone()).unwrap().trim())
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn entries(dir: &Path) -> usize {
    fs::read_dir(dir).map(|d| d.count()).unwrap_or(0)
}

const TINY: &str = r#"{"optimizer": {"de": {"population": 8, "max_iterations": 6},
                       "refine": {"max_iterations": 5},
                       "sample": {"m": 5, "eps_min": -0.005, "eps_max": 0.005}}}"#;

#[test]
fn zero_segments_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let o = opss(&["optimize", "--seed", "1", "--segments", "0"], &out);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(entries(&out), 0, "validation failure left outputs behind");
}

#[test]
fn optimize_requires_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = opss(&["optimize", "--segments", "2"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn zero_coupling_spectrum_is_a_domain_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model": {"three_photon": {"omega_a": 1, "omega_c": 0.3333, "lambda": 0}}}"#,
    );
    let out = tmp.path().join("runs");
    let o = opss(&["spectrum", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(entries(&out), 0);
}

#[test]
fn malformed_fields_are_reported_by_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model": {"casimir": {"omega_c": 1.5, "omega_m": 1, "g": 0.001, "q": 2}}}"#,
    );
    let o = opss(&["spectrum", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.casimir"));

    let cfg = write(tmp.path(), "d.json", r#"{"stats": {"samples": "many"}}"#);
    let o = opss(&["stats", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stats.samples"));
}

#[test]
fn spectrum_reports_the_crossing() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(&opss(&["spectrum", "--model", "casimir"], tmp.path()));
    let rep: Value = serde_json::from_str(&fs::read_to_string(dir.join("crossing.json")).unwrap()).unwrap();
    assert!((rep["ratio"].as_f64().unwrap() - 1.5000105).abs() < 2e-6);
    let csv = fs::read_to_string(dir.join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("ratio,E_0,"));
    assert_eq!(csv.lines().count(), 402);
}

#[test]
fn same_seed_gives_identical_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", TINY);
    let args = ["optimize", "--config", cfg.to_str().unwrap(), "--seed", "11", "--segments", "3"];
    let a = run_dir(&opss(&args, tmp.path()));
    let b = run_dir(&opss(&args, tmp.path()));
    assert_ne!(a, b);
    let seq = fs::read(a.join("sequence.json")).unwrap();
    assert_eq!(seq, fs::read(b.join("sequence.json")).unwrap());

    let rec: Value = serde_json::from_slice(&seq).unwrap();
    assert_eq!(rec["controls"].as_array().unwrap().len(), 3);
    assert!(rec["total_time"].as_f64().unwrap() > 0.0);

    // the snapshot reproduces the run on its own
    let snap = a.join("config.json");
    let c = run_dir(&opss(&["optimize", "--config", snap.to_str().unwrap()], tmp.path()));
    assert_eq!(seq, fs::read(c.join("sequence.json")).unwrap());

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["config.json", "optimization.json", "sequence.json"]);
    assert_eq!(manifest["config"]["seed"], 11);
}

#[test]
fn empty_grid_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"scan": {"grid": {"eps_primary": {"min": -0.01, "max": 0.01, "points": 0},
                               "eps_control": {"min": -0.01, "max": 0.01, "points": 5}}}}"#,
    );
    let out = tmp.path().join("runs");
    let o = opss(&["scan", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(entries(&out), 0);
}

#[test]
fn casimir_landscape_axes_are_scaled() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model": {"casimir": {"omega_c": 1.5, "omega_m": 1, "g": 0.001}},
            "scan": {"grid": {"eps_primary": {"min": -1e-7, "max": 1e-7, "points": 3},
                              "eps_control": {"min": -1e-7, "max": 1e-7, "points": 3}}}}"#,
    );
    let dir = run_dir(&opss(&["scan", "--config", cfg.to_str().unwrap()], tmp.path()));
    let csv = fs::read_to_string(dir.join("landscape.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("eps_1,eps_2,fidelity"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((first[0] + 1.0).abs() < 1e-9 && (first[1] + 1.0).abs() < 1e-9);
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.join("radius.json")).unwrap()).unwrap();
    assert_eq!(summary["points"], 9);
}

#[test]
fn stats_use_the_default_centers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"stats": {"samples": 3}}"#);
    let dir = run_dir(&opss(&["stats", "--config", cfg.to_str().unwrap()], tmp.path()));
    let csv = fs::read_to_string(dir.join("stats.csv")).unwrap();
    let centers: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| l.contains(",omega_a,"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(centers, [0.0, 0.001, 0.005, 0.01]);

    let dir = run_dir(&opss(
        &["stats", "--config", cfg.to_str().unwrap(), "--model", "casimir"],
        tmp.path(),
    ));
    let csv = fs::read_to_string(dir.join("stats.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("1,omega_m,0.00000003,")));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn closed_system_flux_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"dissipation": {"kappa": 0, "gamma": 0},
            "flux": {"eps": {"min": -0.01, "max": 0.01, "points": 2},
                     "integration": {"samples_per_segment": 10}}}"#,
    );
    let dir = run_dir(&opss(&["flux", "--config", cfg.to_str().unwrap()], tmp.path()));
    let csv = fs::read_to_string(dir.join("flux.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap().split(',').nth(1), Some("t_over_T"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r[2] == 0.0));
    assert_eq!(rows.last().unwrap()[1], 1.0);
    let land = fs::read_to_string(dir.join("flux_landscape.csv")).unwrap();
    assert!(land.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn segments_without_a_sequence_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let o = opss(&["scan", "--segments", "7"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}
