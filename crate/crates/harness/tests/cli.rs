use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_atmpc"))
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "does/not/exist.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infeasible_initial_state_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(example("paper_sec4.json")).unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
    cfg["x0"] = serde_json::json!([-300.0, -100.0]);
    let path = dir.path().join("far.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = bin()
        .arg("simulate")
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn wrong_sweep_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("sweep-set")
        .arg(example("paper_sec4.json"))
        .arg(example("sweep_error.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn report_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("report")
        .arg(example("paper_sec4.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "report.txt",
        "certificates.txt",
        "bound_report.csv",
        "run.csv",
        "trajectory.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("x,y\n"));
    assert!(traj.lines().nth(1).unwrap().starts_with("-3"));
}

#[test]
fn bound_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("bound")
        .arg(example("paper_sec4.json"))
        .args(["--format", "json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("bound_report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v.is_object());
}
