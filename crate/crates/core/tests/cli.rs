//! The `kepler-kit` binary end to end.

use std::process::Command;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_kepler-kit")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn classify_prints_the_class_name() {
    let (code, out, _) = run(&["classify", "--omega", "1", "--energy", "-0.375"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "CompactS3");
    let (_, out, _) = run(&["classify", "--omega", "1", "--energy", "0.1"]);
    assert_eq!(out.trim(), "Unbounded");
}

#[test]
fn invalid_input_is_a_usage_error() {
    let (code, _, err) = run(&["criteria", "--system", "ellipsoid", "--omega", "1", "--energy", "0.2"]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
    let (code, _, _) = run(&["scalars", "--eps", "1.5"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["no-such-command"]);
    assert_eq!(code, 2);
}

#[test]
fn criteria_json_goes_to_stdout() {
    let (code, out, _) = run(&["criteria", "--system", "ellipsoid", "--out", "-"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "criteria");
    assert_eq!(v["result"]["report"]["verdict"], "InfinitelyMany_via_ii");
}

#[test]
fn brake_writes_reports_into_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_str().unwrap();
    let (code, _, err) = run(&["brake", "--system", "pyramid", "--n", "3", "--eps", "0.01", "--out", path, "--format", "both"]);
    assert_eq!(code, 0, "{err}");
    assert!(dir.path().join("brake.json").exists());
    let csvs: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .collect();
    assert!(!csvs.is_empty());
}

#[test]
fn selftest_passes() {
    let (code, out, _) = run(&["selftest"]);
    assert_eq!(code, 0, "{out}");
}
