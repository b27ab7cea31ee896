use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hisd(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hisd"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_record_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = hisd(
        dir.path(),
        &[
            "--problem",
            "eckhardt",
            "--index",
            "1",
            "--tau",
            "0.05",
            "run",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rec = json(&dir.path().join("run.json"));
    assert_eq!(rec["termination"]["kind"], "converged");
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("step,t,x_0,x_1,force_norm"));
}

#[test]
fn unconverged_run_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let o = hisd(
        dir.path(),
        &[
            "--problem",
            "stingray",
            "--tau",
            "0.01",
            "run",
            "--max-steps",
            "3",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(dir.path().join("run.json").exists());
}

#[test]
fn bad_input_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        hisd(dir.path(), &["--problem", "mystery", "run"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        hisd(dir.path(), &["--tau=-1", "run"]).status.code(),
        Some(1)
    );
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"solver": {"tau": 1}}"#).unwrap();
    assert_eq!(
        hisd(dir.path(), &["--config", cfg.to_str().unwrap(), "run"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"problem": "stingray", "tau": 0.02, "Index": 1}"#).unwrap();
    let path = cfg.to_str().unwrap();

    let o = hisd(dir.path(), &["--config", path, "run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = json(&dir.path().join("run.json"));
    assert_eq!(rec["problem"], "stingray");
    assert_eq!(rec["tau"], 0.02);
    assert_eq!(rec["index_k"], 1);

    let o = hisd(dir.path(), &["--config", path, "--tau", "0.05", "run"]);
    assert!(o.status.success());
    assert_eq!(json(&dir.path().join("run.json"))["tau"], 0.05);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--problem", "rosenbrock", "--tau", "0.005", "run"];
    assert!(hisd(a.path(), &args).status.success());
    assert!(hisd(b.path(), &args).status.success());
    assert_eq!(
        fs::read(a.path().join("trajectory.csv")).unwrap(),
        fs::read(b.path().join("trajectory.csv")).unwrap()
    );
}

#[test]
fn converge_reports_first_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = hisd(
        dir.path(),
        &[
            "--problem",
            "stingray",
            "--index",
            "1",
            "converge",
            "--taus",
            "0.03125,0.015625,0.0078125",
            "--reference-tau",
            "0.0009765625",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let table = json(&dir.path().join("converge.json"));
    let order = table["order_x"].as_f64().unwrap();
    assert!((0.85..=1.15).contains(&order), "{order}");
    assert!(dir.path().join("converge.csv").exists());
}

#[test]
fn compare_paths_writes_long_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = hisd(
        dir.path(),
        &[
            "--T",
            "1",
            "compare-paths",
            "--a",
            "-30",
            "--b",
            "0.5",
            "--tau-si",
            "0.01",
            "--tau-ex",
            "0.001",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scheme,t,x_0,x_1,distance"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("si,")).count(), 101);
    assert_eq!(csv.lines().filter(|l| l.starts_with("ex,")).count(), 1001);
}
