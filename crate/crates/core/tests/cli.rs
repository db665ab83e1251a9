use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn il7ctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_il7ctl"))
        .args(args)
        .env_remove("IL7CTL_THREADS")
        .output()
        .expect("run il7ctl")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, model_extra: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(
        &path,
        format!(
            r#"
[patient]
lambda = 2.55
rho = 2.06
pi0 = 0.049
mu_r = 0.054
mu_p = 0.068
beta_pi = [0.918, 0.721]
r0 = 332.0
p0 = 8.0

[model]
doses = [0.0, 10.0, 20.0]
n_inj = 2
horizon = 60
sigma_min = 21
alpha = 0.001
eta = 0.1
{model_extra}

[model.grid]
p_max = 150.0
h_p = 15.0
r_max = 1000.0
h_r = 50.0

[mc]
n_runs = 50
seed = 9
"#
        ),
    )
    .unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_then_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mini.toml", "");
    let table = dir.path().join("w.tbl");
    let o = il7ctl(&["solve", "--config", s(&cfg), "--out", s(&table)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("W(x0) = "));
    let report = std::fs::read_to_string(dir.path().join("w.tbl.report.txt")).unwrap();
    assert!(report.contains("converged = true"), "{report}");

    let o = il7ctl(&["simulate", "--config", s(&cfg), "--value", s(&table), "--n", "40"]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["n_runs"], 40);

    let csv = dir.path().join("cmp.csv");
    let o = il7ctl(&["compare", "--config", s(&cfg), "--value", s(&table), "--out", s(&csv)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 6, "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("optimal"));

    let traj = dir.path().join("t.csv");
    let o = il7ctl(&["export-trajectory", "--config", s(&cfg), "--value", s(&table), "--out", s(&traj)]);
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(&traj).unwrap().lines().count() > 60);

    // A table built for another configuration is refused.
    let other = write_config(dir.path(), "other.toml", "threshold = 400.0");
    let o = il7ctl(&["simulate", "--config", s(&other), "--value", s(&table)]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_costs_give_zero_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "free.toml", "threshold = -1.0\nimpulse_costs = false");
    let table = dir.path().join("w.tbl");
    let o = il7ctl(&["solve", "--config", s(&cfg), "--out", s(&table)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("W(x0) = 0\n"), "{}", stdout(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mini.toml", "");

    let o = il7ctl(&["solve", "--config", s(&cfg), "--out", s(&dir.path().join("w.tbl")), "--max-iter", "2"]);
    assert_eq!(code(&o), 3);

    let bad = write_config(dir.path(), "bad.toml", "alpha = -1.0");
    assert_eq!(code(&il7ctl(&["simulate", "--config", s(&bad), "--protocol", "2inj-d20"])), 2);
    assert_eq!(code(&il7ctl(&["simulate", "--config", s(&cfg), "--protocol", "weekly"])), 2);
    assert_eq!(code(&il7ctl(&["simulate", "--config", s(&cfg)])), 2);
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&il7ctl(&["simulate", "--config", s(&missing), "--protocol", "2inj-d20"])), 5);

    let junk = dir.path().join("junk.tbl");
    std::fs::write(&junk, "il7ctl value table\ngarbage\n").unwrap();
    assert_eq!(code(&il7ctl(&["simulate", "--config", s(&cfg), "--value", s(&junk)])), 5);
    assert_eq!(code(&il7ctl(&["simulate", "--config", s(&cfg), "--value", s(&dir.path().join("none.tbl"))])), 5);
    assert_eq!(code(&il7ctl(&["solve"])), 2);
}

#[test]
fn simulation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mini.toml", "");
    let run = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_il7ctl"))
            .args(["simulate", "--config", s(&cfg), "--protocol", "2then1-d20", "--n", "300"])
            .env("IL7CTL_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        stdout(&o)
    };
    assert_eq!(run("1"), run("2"));
    let o = il7ctl(&["simulate", "--config", s(&cfg), "--protocol", "2then1-d20", "--n", "300", "--seed", "10"]);
    assert_ne!(stdout(&o), run("1"));
}
