use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn pope(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pope"))
        .args(args)
        .current_dir(cwd)
        .env("POPE_LOG", "error")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, config: &Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, config.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn toy_config(sigma: f64) -> Value {
    json!({
        "simulator": {"model": {"kind": "gaussian_toy", "sigma": sigma}},
        "prior": {"params": [{"name": "theta", "density": {"uniform": {"lo": -5, "hi": 5}}}]},
        "constraints": [{"stat": 0, "direction": "less_eq", "target": 0, "kernel": "gaussian", "epsilon": 0.5}],
        "run": {"iterations": 400, "burnin": 100, "chains": 2, "mode": "pseudo_marginal",
                "likelihood": "kernel_mc", "step_sizes": [1.0]}
    })
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_config(0.0));
    let out = pope(&["simulate", "--config", &cfg, "--theta", "2.5"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "replicate,y_0,degenerate\n0,2.5,\nmean,2.5,\n");
}

#[test]
fn simulate_replicates_and_negative_theta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_config(1.0));
    let out = pope(
        &[
            "simulate",
            "--config",
            &cfg,
            "--theta",
            "-1",
            "--replicates",
            "10",
            "--seed",
            "4",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[11].starts_with("mean,"));
}

#[test]
fn simulate_malformed_theta_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_config(0.0));
    let out = pope(&["simulate", "--config", &cfg, "--theta", "1,abc"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = pope(&["simulate", "--config", &cfg, "--theta", "1,2"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("theta has 2 values"), "{}", stderr(&out));
}

#[test]
fn simulate_degenerate_gm_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let names = pope::simulators::GM_PARAM_NAMES;
    let params: Vec<Value> = names
        .iter()
        .map(|n| json!({"name": n, "density": {"uniform": {"lo": 0, "hi": 10}}}))
        .collect();
    let config = json!({
        "simulator": {"model": {"kind": "gm_spots"}},
        "prior": {"params": params},
        "run": {"iterations": 10, "mode": "marginal", "likelihood": "kernel_mc", "step_sizes": vec![0.1; 9]}
    });
    let cfg = write_config(dir.path(), &config);
    let out = pope(
        &["simulate", "--config", &cfg, "--theta", "4,1,-2,4,1e-8,1,1,0.01,1"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out)
        .lines()
        .all(|l| l.starts_with("replicate") || l.ends_with("degenerate")));
}

#[test]
fn config_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = toy_config(1.0);
    config["run"]["step_size"] = json!(1.0);
    let cfg = write_config(dir.path(), &config);
    let out = pope(&["run", "--config", &cfg], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("run.step_size"), "{}", stderr(&out));
}

#[test]
fn run_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_config(1.0));
    let out = pope(&["run", "--config", &cfg, "--out", "r", "--seed", "5"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run = dir.path().join("r");
    assert!(run.join("COMPLETE").exists());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["run"]["master_seed"], 5);
    assert_eq!(manifest["config"]["adaptation"]["freeze_after"], 100);
    for c in 0..2 {
        let text = fs::read_to_string(run.join(format!("chain_{c:03}.csv"))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 401);
        // 4 + D + 3J columns
        assert!(lines.iter().all(|l| l.split(',').count() == 4 + 1 + 3));
    }

    let out = pope(
        &[
            "analyze",
            "--runs",
            "r",
            "--threshold",
            "0=0",
            "--joint",
            "theta_0,ybar_0",
            "--bins",
            "20",
            "--report",
            "rep",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let rep = dir.path().join("rep");
    let summary: Value = serde_json::from_str(&fs::read_to_string(rep.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["sample_count"], 600);
    assert_eq!(summary["burnin"], 100);
    let stat = &summary["statistics"][0];
    for key in ["mean", "median", "mode", "p_below_threshold"] {
        assert!(stat[key].is_number(), "{key}");
    }
    assert!(summary["satisfaction_probability"].as_f64().unwrap() <= 1.0);
    assert!(rep.join("marginal_theta_0.csv").exists());
    assert!(rep.join("marginal_ybar_0.csv").exists());
    let joint = fs::read_to_string(rep.join("joint_theta_0_ybar_0.csv")).unwrap();
    assert_eq!(joint.lines().count(), 1 + 20 * 20);

    let out = pope(
        &["analyze", "--runs", "r", "--burnin", "400", "--report", "rep2"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("burnin"), "{}", stderr(&out));

    fs::remove_file(run.join("chain_001.csv")).unwrap();
    let out = pope(&["analyze", "--runs", "r", "--report", "rep3"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("chain_001.csv"), "{}", stderr(&out));
}

#[test]
fn condition_on_integer_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let param = |name: &str| json!({"name": name, "density": {"half_line": {"lo": 0, "init_scale": 2}}});
    let config = json!({
        "simulator": {"model": {"kind": "niche_toy", "target_cells": 5}},
        "prior": {"params": [param("a"), param("b")], "transform": {"base_offset": 0},
                  "increment_limits": {"first_max": 3, "first_epsilon": 1, "increment_max": 3,
                                       "increment_epsilon": 1, "total_max": 8, "total_epsilon": 1}},
        "constraints": [{"stat": 0, "direction": "less_eq", "kernel": "gaussian", "adaptive_objective": true}],
        "run": {"iterations": 200, "burnin": 50, "mode": "marginal", "likelihood": "kernel_mc",
                "step_sizes": [0.5, 0.5]}
    });
    let cfg = write_config(dir.path(), &config);
    assert!(pope(&["run", "--config", &cfg, "--out", "r"], dir.path())
        .status
        .success());
    // Differentiation time is continuous, so conditioning on it fails.
    let out = pope(
        &["analyze", "--runs", "r", "--condition", "stat=0", "--report", "rep"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("continuous"), "{}", stderr(&out));
}

#[test]
fn abort_policy_marks_failed_chain() {
    let dir = tempfile::tempdir().unwrap();
    let worker = env!("CARGO_BIN_EXE_pope-echo-worker");
    let config = json!({
        "simulator": {"model": {"kind": "subprocess", "command": [worker, "--exit-after", "5"], "outputs": 1,
                                "timeout_ms": 5000, "on_failure": "abort"}},
        "prior": {"params": [{"name": "theta", "density": {"uniform": {"lo": -5, "hi": 5}}}]},
        "constraints": [{"stat": 0, "direction": "less_eq", "target": 10, "kernel": "heavyside"}],
        "run": {"iterations": 50, "mode": "marginal", "likelihood": "kernel_mc", "step_sizes": [0.1]}
    });
    let cfg = write_config(dir.path(), &config);
    let out = pope(&["run", "--config", &cfg, "--out", "r"], dir.path());
    assert!(!out.status.success());
    let run = dir.path().join("r");
    assert!(!run.join("COMPLETE").exists());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let chain = &manifest["chains"][0];
    assert_eq!(chain["complete"], false);
    // One request for initialisation, then two per marginal step.
    assert_eq!(chain["failed_step"], 2);
    assert!(chain["error"].as_str().unwrap().contains("simulator aborted"));
    let partial = fs::read_to_string(run.join("chain_000.csv")).unwrap();
    assert_eq!(partial.lines().count(), 1 + 2);
}

#[test]
fn resimulate_requires_deterministic_simulator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_config(0.0));
    assert!(pope(&["run", "--config", &cfg, "--out", "det"], dir.path())
        .status
        .success());
    for (flag, report) in [(None, "stored"), (Some("--resimulate"), "fresh")] {
        let mut args = vec!["analyze", "--runs", "det", "--report", report];
        args.extend(flag);
        let out = pope(&args, dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let read = |r: &str| -> Value {
        serde_json::from_str(&fs::read_to_string(dir.path().join(r).join("summary.json")).unwrap()).unwrap()
    };
    assert_eq!(read("stored")["statistics"], read("fresh")["statistics"]);

    let cfg = write_config(dir.path(), &toy_config(1.0));
    assert!(pope(&["run", "--config", &cfg, "--out", "noisy"], dir.path())
        .status
        .success());
    let out = pope(
        &["analyze", "--runs", "noisy", "--resimulate", "--report", "x"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("deterministic"), "{}", stderr(&out));
}
