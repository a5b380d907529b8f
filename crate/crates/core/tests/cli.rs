use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_langevin-kl"));
    c.env_remove("LANGEVIN_KL_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL_STRONG: &str = r#"
regime = "strong"
epsilon = 0.5
n_chains = 400
seed = 5
record_every = 100
output = "out"

[potential]
kind = "quadratic-diagonal"
params = [1.0]

[init]
kind = "gaussian"
mean = [0.5]
cov_diag = [0.5]

[oracles]
gaussian = true
grid = true
grid_min = -8.0
grid_max = 8.0
grid_n = 1024
"#;

#[test]
fn plan_strong_example() {
    let o = run(&["plan", "--regime", "strong", "--m", "1", "--L", "2", "--d", "2", "--eps", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("h: 7.8125e-4"), "{s}");
    assert!(s.contains("k: 4722"), "{s}");
}

#[test]
fn plan_json_matches_text() {
    let o = run(&["plan", "--regime", "strong", "--m", "1", "--L", "2", "--d", "2", "--eps", "0.1", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["k"], 4722);
    assert!((v[0]["h"].as_f64().unwrap() - 7.8125e-4).abs() < 1e-18);
}

#[test]
fn plan_tv_echoes_squared_epsilon() {
    let o = run(&["plan", "--regime", "strong", "--m", "1", "--L", "2", "--d", "2", "--target", "tv", "--delta", "0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    let eps: f64 = s.lines().find_map(|l| l.strip_prefix("epsilon: ")).unwrap().parse().unwrap();
    assert!((eps - 0.09).abs() < 1e-15, "{s}");
}

#[test]
fn plan_missing_flag_is_usage_error() {
    let o = run(&["plan", "--regime", "strong", "--L", "2", "--d", "2", "--eps", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--m"));
}

#[test]
fn plan_invalid_constants_fail() {
    let o = run(&["plan", "--regime", "strong", "--m", "3", "--L", "2", "--d", "2", "--eps", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn plan_halving_lists_stages() {
    let o = run(&["plan", "--regime", "halving", "--m", "1", "--L", "2", "--d", "2", "--eps", "0.1", "--kl0", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("stage 0") && s.contains("total k:"), "{s}");
}

#[test]
fn verify_inequalities_passes() {
    let o = run(&["verify", "inequalities"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("inequalities: pass"));
}

#[test]
fn verify_unknown_suite_lists_suites() {
    let o = run(&["verify", "nosuchsuite"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("nosuchsuite") && e.contains("inequalities") && e.contains("weak"), "{e}");
}

#[test]
fn bad_thread_count_is_usage_error() {
    let o = bin().env("LANGEVIN_KL_THREADS", "zero").args(["verify", "planner"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "strong.toml", SMALL_STRONG);
    let first = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0), "{}{}", stdout(&first), stderr(&first));
    let out = dir.path().join("out");
    let read = |n: &str| std::fs::read(out.join(n)).unwrap();
    let snapshot: Vec<Vec<u8>> = ["chain.csv", "gaussian.csv", "grid.csv"].iter().map(|n| read(n)).collect();
    assert!(String::from_utf8_lossy(&snapshot[0]).starts_with("step,second_moment,mean_norm,coupled_rms\n"));

    let second = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(second.status.code(), Some(0));
    for (n, before) in ["chain.csv", "gaussian.csv", "grid.csv"].iter().zip(&snapshot) {
        assert_eq!(&read(n), before, "{n} changed between runs");
    }
    let report: serde_json::Value = serde_json::from_slice(&read("report.json")).unwrap();
    assert_eq!(report["seed"], 5);
    assert!(report["total_steps"].as_u64().unwrap() >= 1);
}

#[test]
fn weak_run_records_estimated_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
regime = "weak"
epsilon = 0.5
n_chains = 200
seed = 2
record_every = 200
output = "weak"

[potential]
kind = "huber"
params = [1.0]
dim = 1

[init]
kind = "gaussian"
mean = [0.0]
cov_diag = [2.0]

[weak]
c1 = "estimate"
c2 = 2.0
h_prime = "estimate"
kl0 = "estimate"

[oracles]
grid = true
grid_n = 1024
"#;
    let cfg = write_config(dir.path(), "weak.toml", body);
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("weak inputs:"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("weak/report.json")).unwrap()).unwrap();
    let w = &report["weak_inputs"];
    assert_eq!(w["c2"], 2.0);
    let hp = w["h_prime"].as_f64().unwrap();
    assert!(hp.is_finite() && hp > 0.0);
    assert!(w["c1"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_error_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_STRONG.replace("epsilon = 0.5", "epsilon = -1.0");
    let cfg = write_config(dir.path(), "bad.toml", &body);
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());

    let unknown = write_config(dir.path(), "unknown.toml", &format!("colour = \"red\"\n{SMALL_STRONG}"));
    assert_eq!(run(&["run", unknown.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn failed_write_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "strong.toml", SMALL_STRONG);
    let out = dir.path().join("out");
    // a directory where the report belongs makes the last write fail
    std::fs::create_dir_all(out.join("report.json")).unwrap();
    let o = run(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    for n in ["chain.csv", "gaussian.csv", "grid.csv"] {
        assert!(!out.join(n).exists(), "{n} left behind");
    }
    assert!(out.join("report.json").is_dir());
}
