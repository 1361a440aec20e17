//! Adapter for external simulators over newline-delimited JSON.
//!
//! ```text
//! -> {"id":3,"theta":[0.5,1.0],"seed":42}
//! <- {"id":3,"status":"ok","y":[0.1,2.0]}
//! <- {"id":3,"status":"degenerate"}
//! <- {"id":3,"status":"error","message":"..."}
//! -> {"shutdown":true}
//! ```
//!
//! Requests are strictly sequential. Each chain owns one adapter and hence
//! one worker process.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{finite_or_degenerate, Simulator};
use crate::error::{config_err, PopeError, Result};
use crate::kernels::StatVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Record a diagnostic, report a degenerate output and restart the
    /// worker on the next call.
    #[default]
    Degenerate,
    /// Stop the chain.
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubprocessSettings {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Number of statistics the worker returns.
    pub outputs: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub on_failure: FailurePolicy,
    #[serde(default = "default_true")]
    pub stochastic: bool,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_true() -> bool {
    true
}

impl SubprocessSettings {
    pub fn new(command: Vec<String>, outputs: usize) -> Self {
        SubprocessSettings {
            command,
            outputs,
            timeout_ms: default_timeout_ms(),
            on_failure: FailurePolicy::default(),
            stochastic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.is_empty() {
            return Err(config_err("subprocess command is empty"));
        }
        if self.outputs == 0 {
            return Err(config_err("subprocess outputs must be positive"));
        }
        if self.timeout_ms == 0 {
            return Err(config_err("subprocess timeout_ms must be positive"));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    theta: &'a [f64],
    seed: u64,
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    status: String,
    #[serde(default)]
    y: Option<Vec<f64>>,
    #[serde(default)]
    message: Option<String>,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn spawn(command: &[String]) -> std::io::Result<Worker> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    fn shutdown(mut self) {
        let _ = self.stdin.write_all(b"{\"shutdown\":true}\n");
        let _ = self.stdin.flush();
        drop(self.stdin);
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            match self.child.try_wait() {
                Ok(Some(_)) | Err(_) => return,
                Ok(None) => thread::sleep(Duration::from_millis(5)),
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct SubprocessSimulator {
    settings: SubprocessSettings,
    worker: Option<Worker>,
    next_id: u64,
    diagnostics: Vec<String>,
}

enum Failure {
    /// The stream is unusable; the worker must be replaced.
    Broken(String),
}

impl SubprocessSimulator {
    pub fn new(settings: SubprocessSettings) -> Self {
        SubprocessSimulator {
            settings,
            worker: None,
            next_id: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    fn exchange(&mut self, theta: &[f64], seed: u64) -> Result<StatVector, Failure> {
        if self.worker.is_none() {
            let worker = Worker::spawn(&self.settings.command)
                .map_err(|e| Failure::Broken(format!("cannot start `{}`: {e}", self.settings.command[0])))?;
            self.worker = Some(worker);
        }
        let worker = self.worker.as_mut().expect("worker started");
        let id = self.next_id;
        self.next_id += 1;

        let mut line = serde_json::to_string(&Request { id, theta, seed })
            .map_err(|e| Failure::Broken(format!("cannot encode request: {e}")))?;
        line.push('\n');
        worker
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| worker.stdin.flush())
            .map_err(|e| Failure::Broken(format!("worker exited (write failed: {e})")))?;

        let timeout = Duration::from_millis(self.settings.timeout_ms);
        let reply = match worker.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(Failure::Broken(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Failure::Broken(format!(
                    "timeout after {} ms on request {id}",
                    self.settings.timeout_ms
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Failure::Broken(format!("worker exited before answering request {id}")))
            }
        };
        let response: Response =
            serde_json::from_str(&reply).map_err(|e| Failure::Broken(format!("malformed response `{reply}`: {e}")))?;
        if response.id != id {
            return Err(Failure::Broken(format!(
                "response id {} does not match request id {id}",
                response.id
            )));
        }
        let j = self.settings.outputs;
        match response.status.as_str() {
            "ok" => {
                let y = response
                    .y
                    .ok_or_else(|| Failure::Broken(format!("ok response {id} without y")))?;
                if y.len() != j {
                    return Err(Failure::Broken(format!(
                        "response {id} has {} statistics, expected {j}",
                        y.len()
                    )));
                }
                Ok(finite_or_degenerate(y))
            }
            "degenerate" => Ok(StatVector::degenerate(j)),
            "error" => {
                self.diagnostics.push(format!(
                    "worker error on request {id}: {}",
                    response.message.as_deref().unwrap_or("(no message)")
                ));
                Ok(StatVector::degenerate(j))
            }
            other => Err(Failure::Broken(format!("unknown status `{other}` in response {id}"))),
        }
    }
}

impl Simulator for SubprocessSimulator {
    fn output_dim(&self) -> usize {
        self.settings.outputs
    }

    fn simulate(&mut self, theta: &[f64], seed: u64) -> Result<StatVector> {
        match self.exchange(theta, seed) {
            Ok(y) => Ok(y),
            Err(Failure::Broken(msg)) => {
                if let Some(w) = self.worker.take() {
                    w.kill();
                }
                log::warn!("subprocess simulator: {msg}");
                self.diagnostics.push(msg.clone());
                match self.settings.on_failure {
                    FailurePolicy::Degenerate => Ok(StatVector::degenerate(self.settings.outputs)),
                    FailurePolicy::Abort => Err(PopeError::SimulatorAbort(msg)),
                }
            }
        }
    }

    fn drain_diagnostics(&mut self) -> Vec<String> {
        std::mem::take(&mut self.diagnostics)
    }
}

impl Drop for SubprocessSimulator {
    fn drop(&mut self) {
        if let Some(w) = self.worker.take() {
            w.shutdown();
        }
    }
}
