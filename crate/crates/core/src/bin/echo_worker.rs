//! Reference worker for the subprocess protocol: answers each request with
//! `y = theta`. Flags alter the reply to exercise failure handling.

use std::fs::OpenOptions;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use clap::Parser;
use serde_json::{json, Value};

#[derive(Parser)]
struct Args {
    /// Reply status: ok, degenerate or error.
    #[arg(long, default_value = "ok")]
    status: String,
    /// Delay before each reply.
    #[arg(long, default_value_t = 0)]
    sleep_ms: u64,
    /// Reply with an id one larger than requested.
    #[arg(long)]
    wrong_id: bool,
    /// Reply with a line that is not JSON.
    #[arg(long)]
    garbage: bool,
    /// Exit without replying after this many requests.
    #[arg(long)]
    exit_after: Option<u64>,
    /// Append every received line to this file.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn main() -> io::Result<()> {
    let args = Args::parse();
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for (served, line) in (0u64..).zip(stdin.lock().lines()) {
        let line = line?;
        if let Some(path) = &args.log {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{line}")?;
        }
        let request: Value = serde_json::from_str(&line).unwrap_or(Value::Null);
        if request.get("shutdown").and_then(Value::as_bool) == Some(true) {
            return Ok(());
        }
        if args.exit_after == Some(served) {
            return Ok(());
        }
        if args.sleep_ms > 0 {
            thread::sleep(Duration::from_millis(args.sleep_ms));
        }
        let mut id = request.get("id").and_then(Value::as_u64).unwrap_or(0);
        if args.wrong_id {
            id += 1;
        }
        let reply = if args.garbage {
            "this is not json".to_string()
        } else {
            match args.status.as_str() {
                "degenerate" => json!({"id": id, "status": "degenerate"}).to_string(),
                "error" => json!({"id": id, "status": "error", "message": "worker failed"}).to_string(),
                _ => json!({"id": id, "status": "ok", "y": request["theta"]}).to_string(),
            }
        };
        writeln!(stdout, "{reply}")?;
        stdout.flush()?;
    }
    Ok(())
}
