//! Exit codes and outputs of the command-line verbs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tetherplan"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_then_simulate_with_retrieval() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("pickup_2_0_1.toml");
    let plan = run(&["plan", "--scenario", path(&s), "--out", path(dir.path())]);
    assert_eq!(code(&plan), 0, "{}", String::from_utf8_lossy(&plan.stderr));
    assert!(String::from_utf8_lossy(&plan.stdout).contains("corridor satisfied"));
    for file in [
        "trajectory.csv",
        "corridor.csv",
        "coefficients.csv",
        "cost.csv",
        "history.csv",
    ] {
        assert!(dir.path().join(file).is_file());
    }
    let sim = run(&[
        "simulate",
        "--scenario",
        path(&s),
        "--out",
        path(dir.path()),
        "--retrieval",
    ]);
    assert_eq!(code(&sim), 0, "{}", String::from_utf8_lossy(&sim.stderr));
    let stdout = String::from_utf8_lossy(&sim.stdout);
    assert!(stdout.contains("pickup:") && stdout.contains("retrieval:"));
    assert!(dir.path().join("telemetry.csv").is_file());
}

#[test]
fn simulate_without_a_plan_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("pickup_2_0_1.toml");
    let out = run(&[
        "simulate",
        "--scenario",
        path(&s),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn retrieval_only_runs_without_a_plan() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("pickup_2_0_1.toml");
    let out = run(&[
        "simulate",
        "--scenario",
        path(&s),
        "--out",
        path(dir.path()),
        "--retrieval-only",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unreachable_goal_exits_with_corridor_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "plan",
        "--scenario",
        path(&scenario("out_of_reach.toml")),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("reel"));
}

#[test]
fn malformed_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(
        &file,
        "[scenario]\nstart_position_m = [0.0, 0.0, 0.0]\ngoal_position_m = [2.0, 0.0, 1.0]\n\n[cable]\nsag_limit_m = \"deep\"\n",
    )
    .unwrap();
    let out = run(&["plan", "--scenario", path(&file), "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cable.sag_limit_m"));
}

#[test]
fn missing_scenario_file_is_an_io_failure() {
    let out = run(&["plan", "--scenario", "/nonexistent/scenario.toml"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("pickup_2_0_0.toml");
    let out = run(&[
        "sweep",
        "--scenario",
        path(&s),
        "--out",
        path(dir.path()),
        "--param",
        "goal_z_m=0,1,2",
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("3/3 runs succeeded"));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn sweep_without_a_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario("pickup_2_0_0.toml");
    let out = run(&["sweep", "--scenario", path(&s), "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    let bad = run(&[
        "sweep",
        "--scenario",
        path(&s),
        "--out",
        path(dir.path()),
        "--param",
        "goal_z_m",
    ]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn check_passes_on_defaults() {
    let out = run(&["check", "--instances", "8"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        table.lines().filter(|l| l.contains("PASS")).count(),
        8,
        "{table}"
    );
}
