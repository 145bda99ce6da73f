use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn moran(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_moran"));
    cmd.args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("MORAN_WORKERS");
    if let Some(text) = config {
        let path = dir.join("run.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

#[test]
fn zero_horizon_writes_only_the_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[model]\nn = 20\n[run]\nt_end = 0.0\n";
    let out = moran(&["simulate"], Some(cfg), dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1], "0,initial,0,0,0,0,0");
}

#[test]
fn same_seed_gives_identical_bytes() {
    let cfg = "[model]\nn = 30\n[run]\nt_end = 2.0\nreplicates = 3\nseed = 7\nlabels = true\n";
    let read = |workers: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = moran(&["simulate", "--workers", workers], Some(cfg), dir.path());
        assert!(out.status.success());
        fs::read(dir.path().join("out/trajectory.csv")).unwrap()
    };
    let a = read("1");
    assert_eq!(a, read("1"));
    assert_eq!(a, read("3"));
}

#[test]
fn unknown_keys_are_rejected_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = moran(
        &["simulate"],
        Some("[model]\nn = 10\nsigma = 1\n[extra]\nx = 1\n"),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("model.sigma") && err.contains("extra"),
        "{err}"
    );
}

#[test]
fn small_oracle_check_passes_and_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[model]\nn = 2\n[run]\nt_end = 0.5\nreplicates = 4000\n[experiment]\nradius = 5\n";
    let out = moran(&["oracle-check"], Some(cfg), dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "oracle-check");
    assert_eq!(manifest["config"]["replicates"], 4000);
}
