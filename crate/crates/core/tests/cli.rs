//! End-to-end runs of the `optpac` binary: outputs and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn optpac(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optpac")).arg("--out-dir").arg(out).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn gen_tree(dir: &Path) -> String {
    let o = optpac(dir, &["gen", "--tree", "8", "3", "4", "0.5", "--bernoulli"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("mdp.json").to_string_lossy().into_owned()
}

#[test]
fn gen_then_gaps_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = gen_tree(dir.path());
    let o = optpac(dir.path(), &["gaps", "--mdp", &mdp]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("gaps.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("h,s,a"));
    assert!(csv.contains("inf"), "unreachable triplets are written as inf");
}

#[test]
fn run_and_bounds_and_regret() {
    let dir = tempfile::tempdir().unwrap();
    let o = optpac(dir.path(), &["gen", "--random", "2", "2", "2", "5", "--output", "r.json"]);
    assert_eq!(code(&o), 0);
    let mdp = dir.path().join("r.json").to_string_lossy().into_owned();

    let o = optpac(dir.path(), &["run", "--mdp", &mdp, "--epsilon", "1.0", "--delta", "0.1", "--diagnostics"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert!(run["tau"].as_u64().unwrap() >= 1);

    let o = optpac(dir.path(), &["bounds", "--mdp", &mdp, "--epsilon", "0.1", "--delta", "0.05"]);
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("bounds.csv").exists() && dir.path().join("bound_contributions.csv").exists());

    let o = optpac(
        dir.path(),
        &["regret", "--mdp", &mdp, "--episodes", "500", "--seeds", "2", "--epsilon", "0.2", "--delta", "0.1"],
    );
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("regret.csv")).unwrap();
    assert_eq!(csv.lines().count(), 502);
    assert!(csv.lines().last().unwrap().starts_with("t_epsilon,"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json").to_string_lossy().into_owned();
    assert_eq!(code(&optpac(dir.path(), &["gaps", "--mdp", &missing])), 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"num_states": 2}"#).unwrap();
    assert_eq!(code(&optpac(dir.path(), &["gaps", "--mdp", bad.to_str().unwrap()])), 2);

    // the tree needs at least four states
    assert_eq!(code(&optpac(dir.path(), &["gen", "--tree", "3", "2", "2", "0.5"])), 2);
    // both sources at once
    assert_eq!(code(&optpac(dir.path(), &["gen", "--tree", "8", "3", "4", "0.5", "--random", "2", "2", "2", "1"])), 2);

    let mdp = gen_tree(dir.path());
    let o = optpac(dir.path(), &["run", "--mdp", &mdp, "--epsilon", "0.5", "--delta", "1.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta"));

    let cfg = dir.path().join("sweep.json");
    fs::write(&cfg, r#"{"instances":[],"epsilon":0.2,"delta":0.1,"seeds":[0]}"#).unwrap();
    assert_eq!(code(&optpac(dir.path(), &["sweep", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn sweep_is_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    fs::write(
        &cfg,
        r#"{"instances":[{"kind":"random","num_states":2,"num_actions":2,"horizon":2,"seed":3}],
            "epsilon":1.0,"delta":0.1,"seeds":{"start":0,"end":4}}"#,
    )
    .unwrap();
    let mut bytes = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("out{jobs}"));
        let o = optpac(&out, &["--jobs", jobs, "sweep", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        bytes.push(fs::read(out.join("sweep.csv")).unwrap());
        assert!(out.join("sweep_manifest.json").exists());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert!(String::from_utf8_lossy(&bytes[0]).starts_with("# optpac sweep schema=1"));
}

#[test]
fn verify_suite_reports_each_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = optpac(dir.path(), &["verify", "--suite", "bounds"]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS") && stdout.trim_end().ends_with("2/2 passed"), "{stdout}");
}
