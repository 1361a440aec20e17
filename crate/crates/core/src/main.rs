use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use pope::analysis::Axis;
use pope::config::{cmd_analyze, cmd_run, cmd_simulate, parse_config, AnalyzeOptions, RunOverrides};

#[derive(Parser)]
#[command(name = "pope", version, about = "ABC-MCMC posteriors over simulator parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured chains and write traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise completed runs.
    Analyze {
        #[arg(long, required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        burnin: Option<usize>,
        /// `j=c`: report P(y_j < c). Repeatable.
        #[arg(long, value_parser = parse_threshold)]
        threshold: Vec<(usize, f64)>,
        /// `stat=j`: split samples by the integer value of y_j.
        #[arg(long, value_parser = parse_condition)]
        condition: Option<usize>,
        /// `a,b` with axes `theta_<d>` or `ybar_<j>`. Repeatable.
        #[arg(long, value_parser = parse_joint)]
        joint: Vec<(Axis, Axis)>,
        #[arg(long)]
        bins: Option<usize>,
        /// Re-run a deterministic simulator instead of using stored ybar.
        #[arg(long)]
        resimulate: bool,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the simulator at fixed parameters.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated simulator parameters.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        theta: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_threshold(s: &str) -> Result<(usize, f64), String> {
    let (j, c) = s.split_once('=').ok_or("expected j=c")?;
    let j = j.trim().parse().map_err(|_| format!("bad statistic index `{j}`"))?;
    let c = c.trim().parse().map_err(|_| format!("bad threshold `{c}`"))?;
    Ok((j, c))
}

fn parse_condition(s: &str) -> Result<usize, String> {
    let idx = s.strip_prefix("stat=").unwrap_or(s);
    idx.trim().parse().map_err(|_| format!("expected stat=<j>, got `{s}`"))
}

fn parse_joint(s: &str) -> Result<(Axis, Axis), String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    Ok((
        a.parse().map_err(|e: pope::PopeError| e.to_string())?,
        b.parse().map_err(|e: pope::PopeError| e.to_string())?,
    ))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            chains,
            out,
        } => {
            let cfg = parse_config(&config)?;
            let outcome = cmd_run(cfg, &RunOverrides { seed, chains, out })?;
            let failed = outcome.failed_chains();
            if !failed.is_empty() {
                for c in &failed {
                    eprintln!(
                        "chain {} failed at step {}: {}",
                        c.index,
                        c.failed_step.map_or("init".to_string(), |s| s.to_string()),
                        c.error.as_deref().unwrap_or("")
                    );
                }
                bail!(
                    "{} of {} chains failed; partial traces kept in {}",
                    failed.len(),
                    outcome.manifest.chains.len(),
                    outcome.dir.display()
                );
            }
            println!("{}", outcome.dir.display());
        }
        Command::Analyze {
            runs,
            burnin,
            threshold,
            condition,
            joint,
            bins,
            resimulate,
            report,
        } => {
            let opts = AnalyzeOptions {
                runs,
                burnin,
                thresholds: threshold,
                condition,
                joints: joint,
                bins,
                resimulate,
                report: report.clone(),
            };
            let summary = cmd_analyze(&opts)?;
            println!(
                "{} samples summarised into {}",
                summary.sample_count,
                report.join("summary.json").display()
            );
        }
        Command::Simulate {
            config,
            theta,
            replicates,
            seed,
        } => {
            let cfg = parse_config(&config)?;
            let stdout = std::io::stdout();
            cmd_simulate(&cfg, &theta, replicates, seed, &mut stdout.lock()).context("simulate")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POPE_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
