//! End-to-end tests of the `linrep` binary: exit codes, artifact layout,
//! output-root resolution, and the compare subcommand.

use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

const BINARY: &str = env!("CARGO_BIN_EXE_linrep");

fn run_with_root(root: &Path, args: &[&str]) -> Output {
    Command::new(BINARY)
        .args(args)
        .env("LINREP_OUTPUT_ROOT", root)
        .output()
        .expect("binary launches")
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn decay_reference_json(output: &str, steps: usize) -> String {
    format!(
        r#"{{
            "model": {{"kind": "decay", "x0": 1.0}},
            "method": "reference",
            "delta": 0.01,
            "steps": {steps},
            "output": "{output}"
        }}"#
    )
}

fn decay_cme_json(output: &str) -> String {
    format!(
        r#"{{
            "model": {{"kind": "decay", "x0": 1.0}},
            "method": "cme_exponential",
            "delta": 0.01,
            "steps": 40,
            "output": "{output}",
            "grid": {{"x": {{"low": 0.0, "high": 2.0, "points": 128}}}},
            "initial": {{"kind": "delta"}},
            "epsilons": [0.1],
            "heatmap_stride": 10
        }}"#
    )
}

#[test]
fn missing_config_file_exits_with_io_status() {
    let root = TempDir::new().unwrap();
    let out = run_with_root(root.path(), &["run", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_config_exits_with_config_status_and_names_the_field() {
    let root = TempDir::new().unwrap();
    let config = write_config(
        root.path(),
        "bad.json",
        r#"{
            "model": {"kind": "decay", "x0": 1.0},
            "method": "kvn",
            "delta": 0.01,
            "steps": 10,
            "output": "runs/bad"
        }"#,
    );
    let out = run_with_root(root.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("grid"), "stderr names the field: {stderr}");
}

#[test]
fn cfl_violation_exits_numerical_and_records_failure_in_meta() {
    let root = TempDir::new().unwrap();
    // 256 nodes on [0,2): max rate = 4/(2/256) = 512, so δ = 0.01 violates
    // the forward-Euler stability bound.
    let config = write_config(
        root.path(),
        "euler.json",
        r#"{
            "model": {"kind": "decay", "x0": 1.0},
            "method": "cme_euler",
            "delta": 0.01,
            "steps": 10,
            "output": "euler_run",
            "grid": {"x": {"low": 0.0, "high": 2.0, "points": 256}},
            "initial": {"kind": "delta"}
        }"#,
    );
    let out = run_with_root(root.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(root.path().join("euler_run/meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["status"], "failed");
    assert!(meta["error"].as_str().unwrap().contains("CFL"));
}

#[test]
fn observable_run_writes_trajectory_and_meta() {
    let root = TempDir::new().unwrap();
    let config = write_config(
        root.path(),
        "ref.json",
        &decay_reference_json("ref_run", 20),
    );
    let out = run_with_root(root.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let dir = root.path().join("ref_run");
    assert!(dir.join("trajectory.csv").exists());
    assert!(dir.join("meta.json").exists());
    assert!(!dir.join("summary.csv").exists());
    assert!(!dir.join("heatmap.csv").exists());
    let text = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x"));
    assert_eq!(lines.count(), 21, "one record per sample");
}

#[test]
fn grid_run_writes_summary_heatmap_and_meta() {
    let root = TempDir::new().unwrap();
    let config = write_config(root.path(), "cme.json", &decay_cme_json("cme_run"));
    let out = run_with_root(root.path(), &["run", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let dir = root.path().join("cme_run");
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("t,mode_x,mean_x,std_x,p_eps@0.1"));
    assert_eq!(summary.lines().count(), 42, "header + 41 samples");
    let heatmap = std::fs::read_to_string(dir.join("heatmap.csv")).unwrap();
    let mut lines = heatmap.lines();
    assert!(lines.next().unwrap().starts_with("# grid: nx=128"));
    assert!(lines.next().unwrap().starts_with("t,n0,n1,"));
    // Samples 0, 10, 20, 30, 40 survive the stride.
    assert_eq!(lines.count(), 5);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "ok");
    assert!(meta["invariants"]["column_sum_residual"].as_f64().unwrap() < 1e-12);
    assert!(meta["invariants"]["mass_drift"].as_f64().unwrap() < 1e-10);
}

#[test]
fn relative_outputs_land_under_the_env_root() {
    let root = TempDir::new().unwrap();
    let elsewhere = TempDir::new().unwrap();
    let config = write_config(
        elsewhere.path(),
        "ref.json",
        &decay_reference_json("nested/ref_run", 5),
    );
    let out = Command::new(BINARY)
        .args(["run", config.to_str().unwrap()])
        .env("LINREP_OUTPUT_ROOT", root.path())
        .current_dir(elsewhere.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(root.path().join("nested/ref_run/trajectory.csv").exists());
    assert!(!elsewhere.path().join("nested").exists());
}

#[test]
fn compare_of_identical_runs_reports_zero_differences() {
    let root = TempDir::new().unwrap();
    for name in ["a", "b"] {
        let config = write_config(
            root.path(),
            &format!("{name}.json"),
            &decay_reference_json(&format!("{name}_run"), 20),
        );
        let out = run_with_root(root.path(), &["run", config.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    let a = root.path().join("a_run");
    let b = root.path().join("b_run");
    let report = root.path().join("report.csv");
    let out = run_with_root(
        root.path(),
        &[
            "compare",
            a.to_str().unwrap(),
            "--reference",
            b.to_str().unwrap(),
            "--threshold",
            "1e-12",
            "--output",
            report.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(report).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("run,estimator,rmse,horizon"));
    let record = lines.next().unwrap();
    let fields: Vec<&str> = record.split(',').collect();
    assert_eq!(fields[0], "a_run");
    assert_eq!(fields[1], "state");
    assert_eq!(fields[2].parse::<f64>().unwrap(), 0.0);
    assert_eq!(fields[3].parse::<f64>().unwrap(), f64::INFINITY);
}

#[test]
fn compare_rejects_mismatched_sampling() {
    let root = TempDir::new().unwrap();
    for (name, steps) in [("short", 10usize), ("long", 20)] {
        let config = write_config(
            root.path(),
            &format!("{name}.json"),
            &decay_reference_json(&format!("{name}_run"), steps),
        );
        let out = run_with_root(root.path(), &["run", config.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    let out = run_with_root(
        root.path(),
        &[
            "compare",
            root.path().join("short_run").to_str().unwrap(),
            "--reference",
            root.path().join("long_run").to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rerunning_a_config_is_byte_identical() {
    let root = TempDir::new().unwrap();
    let config = write_config(root.path(), "cme.json", &decay_cme_json("first"));
    assert_eq!(
        run_with_root(root.path(), &["run", config.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let config = write_config(
        root.path(),
        "cme2.json",
        &decay_cme_json("second"),
    );
    assert_eq!(
        run_with_root(root.path(), &["run", config.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    for artifact in ["summary.csv", "heatmap.csv"] {
        let first = std::fs::read(root.path().join("first").join(artifact)).unwrap();
        let second = std::fs::read(root.path().join("second").join(artifact)).unwrap();
        assert_eq!(first, second, "{artifact} differs between reruns");
    }
}
