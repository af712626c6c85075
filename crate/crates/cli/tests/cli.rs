use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_opinion-lab"));
    cmd.env("OPINION_LAB_THREADS", "2");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, contents).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn fvct_prints_limit() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", r#"{"opinions": [0, 0.6, 1], "bounds": [0.25, 1, 0.25]}"#);
    let out = run(&["fvct", "--state", &s, "--model", "sbc"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "[0, 0.5, 1]");
}

#[test]
fn csv_state_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.csv", "opinion,bound\n0,0.25\n0.6,1\n1,0.25\n");
    let out = run(&["fvct", "--state", &s, "--model", "SBC"]);
    assert_eq!(stdout(&out).trim(), "[0, 0.5, 1]");
}

#[test]
fn simulate_agreement_vector_fixed_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", r#"{"opinions": [0, 0, 1], "bounds": [0.1, 0.1, 0.1], "model": "sbi"}"#);
    let out_dir = dir.path().join("run");
    let out = run(&["simulate", "--state", &s, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let events: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("events.json")).unwrap()).unwrap();
    assert_eq!(events["fixed_at"], 1);
    assert_eq!(events["termination"], "fixed_state");
    let traj = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert_eq!(traj, "t,x_0,x_1,x_2\n0,0,0,1\n1,0,0,1\n");
}

#[test]
fn classify_and_check_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", r#"{"opinions": [0, 0.6, 1], "bounds": [0.25, 1, 0.25]}"#);
    let out = run(&["classify", "--state", &s, "--model", "sbc", "--edges"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["components"].as_array().unwrap().len(), 3);
    assert_eq!(v["digraph"]["edges"].as_array().unwrap().len(), 5);
    assert_eq!(v["open_wccs"], serde_json::json!([[1]]));

    let out = run(&["check", "--state", &s, "--model", "sbc"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["fvct_epsilon"], serde_json::json!([0.125, 0.125, 0.125]));
    assert_eq!(v["in_iet_of_fvct"], true);
    assert_eq!(v["is_equilibrium"], false);
}

#[test]
fn analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(
        dir.path(),
        "s.json",
        r#"{"opinions": [0, 1.5, 3.5, 5, 1, 1, 4, 2.1], "bounds": [0.01, 0.01, 0.01, 0.01, 1, 1, 1, 3], "model": "sbc"}"#,
    );
    let out_dir = dir.path().join("run");
    assert!(run(&["simulate", "--state", &s, "--out", out_dir.to_str().unwrap()]).status.success());
    let traj = out_dir.join("trajectory.csv");
    let out = run(&["analyze", "--state", &s, "--trajectory", traj.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["rates"]["all_converged"], true);
    let rate = &v["rates"]["agents"][7];
    assert!((rate["factor"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    let verified: Vec<_> =
        v["directions"].as_array().unwrap().iter().filter(|d| d["status"] == "verified").collect();
    assert_eq!(verified.len(), 1);
    assert_eq!(v["limit_equilibrium"]["confirmed"], true);
}

#[test]
fn experiment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"agent_counts": [4, 6], "runs": 3, "seed": 11}"#);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = run(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["results.csv", "aggregate.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let results = fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn malformed_input_exits_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.csv", "0,0.25\n0.6,oops\n");
    let out = run(&["fvct", "--state", &s, "--model", "sbc"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2, field 2"), "{err}");

    let s = write(dir.path(), "s.json", r#"{"opinions": [0, 1], "bounds": [0.1]}"#);
    assert_eq!(run(&["check", "--state", &s, "--model", "sbi"]).status.code(), Some(1));

    let cfg = write(dir.path(), "c.json", r#"{"runs": 0}"#);
    assert_eq!(run(&["experiment", "--config", &cfg]).status.code(), Some(1));

    assert_eq!(run(&["fvct"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn analysis_of_short_window_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", r#"{"opinions": [0, 0.6, 1], "bounds": [0.25, 1, 0.25], "model": "sbc"}"#);
    let traj = write(dir.path(), "t.csv", "t,x_0,x_1,x_2\n0,0,0.6,1\n1,0,0.53333333333333333,1\n");
    let out = run(&["analyze", "--state", &s, "--trajectory", &traj, "--window", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn agent_count_mismatch_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", r#"{"opinions": [0, 0.6, 1], "bounds": [0.25, 1, 0.25], "model": "sbc"}"#);
    let traj = write(dir.path(), "t.csv", "t,x_0,x_1\n0,0,0.6\n");
    let out = run(&["analyze", "--state", &s, "--trajectory", &traj]);
    assert_eq!(out.status.code(), Some(1));
}
