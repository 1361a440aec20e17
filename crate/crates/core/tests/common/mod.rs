#![allow(dead_code)]

use std::fs;
use std::path::Path;

use pope::simulators::{FailurePolicy, Simulator, SubprocessSettings, SubprocessSimulator};
use pope::PopeError;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn worker_settings(args: &[&str], outputs: usize) -> SubprocessSettings {
    let mut command = vec![env!("CARGO_BIN_EXE_pope-echo-worker").to_string()];
    command.extend(args.iter().map(|s| s.to_string()));
    SubprocessSettings::new(command, outputs)
}

fn logged_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .map(String::from)
        .collect()
}

pub fn echo_ok() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = dir.path().join("requests.log");
    let log_arg = log.to_str().unwrap();
    let mut sim = SubprocessSimulator::new(worker_settings(&["--log", log_arg], 2));
    let y = sim.simulate(&[0.5, -1.5], 7).map_err(|e| e.to_string())?;
    ensure!(!y.degenerate && y.values == vec![0.5, -1.5], "echo returned {y:?}");
    let y = sim.simulate(&[2.0, 3.25], 8).map_err(|e| e.to_string())?;
    ensure!(y.values == vec![2.0, 3.25], "second echo returned {y:?}");
    drop(sim);
    let lines = logged_lines(&log);
    let want = [
        r#"{"id":0,"theta":[0.5,-1.5],"seed":7}"#,
        r#"{"id":1,"theta":[2.0,3.25],"seed":8}"#,
        r#"{"shutdown":true}"#,
    ];
    ensure!(lines == want, "worker saw {lines:?}");
    Ok(())
}

pub fn degenerate_status() -> Check {
    let mut sim = SubprocessSimulator::new(worker_settings(&["--status", "degenerate"], 3));
    let y = sim.simulate(&[1.0, 2.0, 3.0], 0).map_err(|e| e.to_string())?;
    ensure!(y.degenerate && y.values.len() == 3, "got {y:?}");
    ensure!(
        sim.drain_diagnostics().is_empty(),
        "degenerate reply should not be a diagnostic"
    );
    Ok(())
}

pub fn error_status() -> Check {
    for policy in [FailurePolicy::Degenerate, FailurePolicy::Abort] {
        let mut settings = worker_settings(&["--status", "error"], 1);
        settings.on_failure = policy;
        let mut sim = SubprocessSimulator::new(settings);
        let y = sim.simulate(&[1.0], 0).map_err(|e| e.to_string())?;
        ensure!(y.degenerate, "error reply gave {y:?}");
        let diags = sim.drain_diagnostics();
        ensure!(
            diags.len() == 1 && diags[0].contains("worker failed"),
            "diagnostics {diags:?}"
        );
    }
    Ok(())
}

pub fn timeout() -> Check {
    let mut settings = worker_settings(&["--sleep-ms", "3000"], 1);
    settings.timeout_ms = 200;
    let mut sim = SubprocessSimulator::new(settings.clone());
    let y = sim.simulate(&[1.0], 0).map_err(|e| e.to_string())?;
    ensure!(y.degenerate, "timeout gave {y:?}");
    let diags = sim.drain_diagnostics();
    ensure!(diags.iter().any(|d| d.contains("timeout")), "diagnostics {diags:?}");

    settings.on_failure = FailurePolicy::Abort;
    let mut sim = SubprocessSimulator::new(settings);
    match sim.simulate(&[1.0], 0) {
        Err(PopeError::SimulatorAbort(msg)) if msg.contains("timeout") => Ok(()),
        other => Err(format!("abort policy gave {other:?}")),
    }
}

pub fn shutdown() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = dir.path().join("requests.log");
    let mut sim = SubprocessSimulator::new(worker_settings(&["--log", log.to_str().unwrap()], 1));
    sim.simulate(&[4.0], 1).map_err(|e| e.to_string())?;
    drop(sim);
    let lines = logged_lines(&log);
    ensure!(
        lines.last().map(String::as_str) == Some(r#"{"shutdown":true}"#),
        "last line {:?}",
        lines.last()
    );
    Ok(())
}

pub fn restart_after_exit() -> Check {
    let mut sim = SubprocessSimulator::new(worker_settings(&["--exit-after", "1"], 1));
    let a = sim.simulate(&[1.0], 0).map_err(|e| e.to_string())?;
    let b = sim.simulate(&[2.0], 0).map_err(|e| e.to_string())?;
    let c = sim.simulate(&[3.0], 0).map_err(|e| e.to_string())?;
    ensure!(a.values == vec![1.0], "first {a:?}");
    ensure!(b.degenerate, "second should fail: {b:?}");
    ensure!(!c.degenerate && c.values == vec![3.0], "restarted worker gave {c:?}");
    Ok(())
}

pub fn protocol_errors() -> Check {
    for (args, needle) in [
        (&["--wrong-id"][..], "does not match"),
        (&["--garbage"][..], "malformed"),
    ] {
        let mut sim = SubprocessSimulator::new(worker_settings(args, 1));
        let y = sim.simulate(&[1.0], 0).map_err(|e| e.to_string())?;
        ensure!(y.degenerate, "{args:?} gave {y:?}");
        let diags = sim.drain_diagnostics();
        ensure!(diags.iter().any(|d| d.contains(needle)), "{args:?}: {diags:?}");
    }
    let mut sim = SubprocessSimulator::new(worker_settings(&[], 3));
    let y = sim.simulate(&[1.0], 0).map_err(|e| e.to_string())?;
    ensure!(y.degenerate, "wrong output length gave {y:?}");
    Ok(())
}

pub fn conformance_suite() -> Vec<(&'static str, Check)> {
    vec![
        ("ok", echo_ok()),
        ("degenerate", degenerate_status()),
        ("error", error_status()),
        ("timeout", timeout()),
        ("shutdown", shutdown()),
        ("restart", restart_after_exit()),
        ("protocol errors", protocol_errors()),
    ]
}
