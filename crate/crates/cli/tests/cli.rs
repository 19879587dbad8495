use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn treefix(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_treefix"));
    cmd.args(args).env_remove("TREEFIX_OUT").env_remove("TREEFIX_JOBS");
    if let Some(dir) = out {
        cmd.env("TREEFIX_OUT", dir);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SPEC: &str = r#"
theta = [0.9, 1.0]
replicas = 3
horizon = 20.0
seed = 4

[topology]
kind = "stack_free_finite"
k = 4
width = 2
radius = 3
"#;

#[test]
fn analytics_prints_the_fixed_points() {
    let o = treefix(&["analytics", "--K", "3,5", "--theta-grid", "0.9,0.95"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "K,theta,tau,tau_tilde,mu_leaf,mu_pair,lambda_star,theta_star");
    assert_eq!(lines.len(), 5);
    // K=3: τ = 2 − 1/θ
    let tau: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((tau - (2.0 - 1.0 / 0.9)).abs() < 1e-12);
    // K=5 at θ = 0.9 sits below the threshold
    assert!(lines[3].starts_with("5,0.9,0,0,0,0,1,"), "{}", lines[3]);
}

#[test]
fn analytics_range_grid_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = treefix(&["analytics", "--K", "4", "--theta-grid", "0.93:0.94:0.002"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("analytics.csv")).unwrap();
    let thetas: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(thetas, ["0.93", "0.932", "0.934", "0.936", "0.938", "0.94"]);
}

#[test]
fn invalid_input_exits_with_two() {
    for args in [
        &["analytics", "--K", "3", "--theta-grid", "0.5,1.5"][..],
        &["analytics", "--K", "2", "--theta-grid", "0.5"],
        &["oracle", "--event", "leaf", "--K", "3", "--theta", "0.9", "--depth", "2"],
        &["oracle", "--event", "triple", "--K", "3", "--theta", "0.9", "--depth", "6"],
    ] {
        let o = treefix(args, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn lemmas_selftest_passes() {
    let o = treefix(&["lemmas", "--selftest", "--instances", "300", "--seed", "3"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0,pass")), "{text}");
}

#[test]
fn oracle_pass_and_fail() {
    let o = treefix(&["oracle", "--event", "pair", "--K", "3", "--theta", "0.9", "--depth", "8", "--samples", "20000"], None);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).trim_end().ends_with(",pass"));
    // just below the K=5 threshold the depth-5 law is far from the fixed point 0
    let o = treefix(&["oracle", "--event", "leaf", "--K", "5", "--theta", "0.93", "--depth", "5", "--samples", "2000"], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).trim_end().ends_with(",FAIL"));
}

#[test]
fn simulate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, SPEC).unwrap();
    let runs = dir.path().join("runs");
    let o = treefix(&["simulate", spec.to_str().unwrap(), "--out", runs.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout(&o);
    assert_eq!(summary.lines().count(), 3);

    let run_dirs: Vec<_> = fs::read_dir(&runs).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(run_dirs.len(), 1);
    let records = fs::read_to_string(run_dirs[0].join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 7);
    for file in ["spec.toml", "summary.csv", "summary.json", "summary.svg", "timing.json"] {
        assert!(run_dirs[0].join(file).exists(), "{file}");
    }

    let o = treefix(&["report", run_dirs[0].to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), summary);

    // a rerun with the same seed reproduces the records; a new seed gets its own directory
    treefix(&["simulate", spec.to_str().unwrap()], Some(&runs));
    assert_eq!(fs::read_to_string(run_dirs[0].join("records.csv")).unwrap(), records);
    let o = treefix(&["simulate", spec.to_str().unwrap(), "--seed", "5"], Some(&runs));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_dir(&runs).unwrap().count(), 2);
}

#[test]
fn bad_specs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, format!("{SPEC}\nunknown_key = 1\n")).unwrap();
    let o = treefix(&["simulate", spec.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    fs::write(&spec, SPEC.replace("replicas = 3", "replicas = 0")).unwrap();
    let o = treefix(&["simulate", spec.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_of_missing_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = treefix(&["report", dir.path().join("nope").to_str().unwrap()], None);
    assert!(!o.status.success());
}
