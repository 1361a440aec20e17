//! Experiment configuration and the `run`, `analyze` and `simulate` commands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    condition_on_discrete, joint_histogram, load_traces, satisfaction_probability, summarize_parameter,
    summarize_statistic, summarize_values, Axis, DiscreteGroup, Histogram1d, PosteriorSample, StatisticSummary,
    Summary, TraceWriter, DEFAULT_BINS,
};
use crate::error::{config_err, PopeError, Result};
use crate::kernels::ConstraintSpec;
use crate::sampler::{AdaptationConfig, ChainFailure, PriorSpec, RunConfig, Sampler};
use crate::seed;
use crate::simulators::SimulatorSpec;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMPLETE_MARKER: &str = "COMPLETE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { bins: DEFAULT_BINS }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub simulator: SimulatorSpec,
    pub prior: PriorSpec,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    pub run: RunConfig,
    #[serde(default)]
    pub adaptation: AdaptationConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn param_count(&self) -> usize {
        self.prior.dim()
    }

    pub fn stat_count(&self) -> usize {
        self.simulator.output_dim(self.param_count())
    }

    /// Fill every default explicitly so the manifest echo is self-contained.
    pub fn materialize(&mut self) {
        self.prior.materialize();
        for c in &mut self.constraints {
            c.epsilon_min.get_or_insert(c.epsilon);
        }
        self.adaptation.freeze_after.get_or_insert(self.run.burnin);
        if self.run.log_walk.is_empty() {
            self.run.log_walk = vec![false; self.param_count()];
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.simulator.validate(self.param_count())?;
        let j = self.stat_count();
        for (k, c) in self.constraints.iter().enumerate() {
            if c.stat >= j {
                return Err(config_err(format!(
                    "constraints[{k}] references statistic {} but the simulator has {j}",
                    c.stat
                )));
            }
            if self.constraints[..k].iter().any(|o| o.stat == c.stat) {
                return Err(config_err(format!("statistic {} is constrained twice", c.stat)));
            }
        }
        if self.analysis.bins == 0 {
            return Err(config_err("analysis.bins must be positive"));
        }
        self.sampler().map(|_| ())
    }

    pub fn sampler(&self) -> Result<Sampler> {
        Sampler::new(
            self.run.clone(),
            self.prior.clone(),
            self.constraints.clone(),
            self.adaptation.clone(),
            self.stat_count(),
        )
    }
}

/// Parse a JSON config, reporting the JSON path of any schema error, then
/// materialise defaults and validate.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| PopeError::ConfigAt {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    config.materialize();
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| PopeError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub index: usize,
    pub seed: u64,
    pub file: String,
    pub records: usize,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub param_names: Vec<String>,
    pub stat_count: usize,
    pub chains: Vec<ChainReport>,
    pub complete: bool,
    pub started_unix: u64,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Manifest> {
        let path = run_dir.join(MANIFEST_FILE);
        let text =
            fs::read_to_string(&path).map_err(|e| PopeError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn chain_file_name(index: usize) -> String {
    format!("chain_{index:03}.csv")
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn failed_chains(&self) -> Vec<&ChainReport> {
        self.manifest.chains.iter().filter(|c| !c.complete).collect()
    }
}

/// Run every chain on its own thread and persist traces, manifest and, if
/// all chains finished, the completion marker. Chain failures do not make
/// this return `Err`; check [`RunOutcome::failed_chains`].
pub fn cmd_run(mut config: ExperimentConfig, overrides: &RunOverrides) -> Result<RunOutcome> {
    if let Some(seed) = overrides.seed {
        config.run.master_seed = seed;
    }
    if let Some(chains) = overrides.chains {
        config.run.chains = chains;
    }
    if let Some(out) = &overrides.out {
        config.output_dir = out.clone();
    }
    config.materialize();
    config.validate()?;
    let sampler = config.sampler()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let marker = dir.join(COMPLETE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }

    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let d = config.param_count();
    let j = config.stat_count();
    log::info!(
        "running {} chains of {} steps into {}",
        config.run.chains,
        config.run.iterations,
        dir.display()
    );

    let results: Vec<Result<ChainReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.run.chains)
            .map(|c| {
                let sampler = &sampler;
                let config = &config;
                let dir = &dir;
                scope.spawn(move || -> Result<ChainReport> {
                    let mut sim = config.simulator.build(d)?;
                    let outcome = sampler.run_chain(&mut sim, c);
                    let (records, failure) = match outcome {
                        Ok(records) => (records, None),
                        Err(ChainFailure { step, error, partial }) => (partial, Some((step, error))),
                    };
                    let file = chain_file_name(c);
                    let mut writer = TraceWriter::new(BufWriter::new(File::create(dir.join(&file))?), d, j)?;
                    for r in &records {
                        writer.write(r)?;
                    }
                    writer.flush()?;
                    let mut report = ChainReport {
                        index: c,
                        seed: sampler.chain_seed(c),
                        file,
                        records: records.len(),
                        complete: failure.is_none(),
                        failed_step: None,
                        error: None,
                    };
                    if let Some((step, error)) = failure {
                        log::error!("chain {c} failed at step {step:?}: {error}");
                        report.failed_step = step;
                        report.error = Some(error.to_string());
                    }
                    Ok(report)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;
    let complete = chains.iter().all(|c| c.complete);
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        param_names: config.prior.params.iter().map(|p| p.name.clone()).collect(),
        stat_count: j,
        config,
        chains,
        complete,
        started_unix,
        wall_time_seconds: clock.elapsed().as_secs_f64(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    if complete {
        fs::write(&marker, "")?;
    }
    Ok(RunOutcome { dir, manifest })
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub runs: Vec<PathBuf>,
    pub burnin: Option<usize>,
    pub thresholds: Vec<(usize, f64)>,
    pub condition: Option<usize>,
    pub joints: Vec<(Axis, Axis)>,
    pub bins: Option<usize>,
    /// Replace stored `ybar` with a fresh simulation at each sample's
    /// parameters. Only allowed for deterministic simulators.
    pub resimulate: bool,
    pub report: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub index: usize,
    pub name: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    #[serde(flatten)]
    pub group: DiscreteGroup,
    pub statistics: Vec<Summary>,
    pub parameters: Vec<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conditioning {
    pub stat: usize,
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointReport {
    pub x: String,
    pub y: String,
    pub csv: String,
    pub json: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub runs: Vec<PathBuf>,
    pub burnin: usize,
    pub bins: usize,
    pub sample_count: usize,
    pub statistics: Vec<StatisticSummary>,
    pub parameters: Vec<ParameterSummary>,
    pub satisfaction_probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<Conditioning>,
    pub joint: Vec<JointReport>,
}

fn group_summaries(
    samples: &[&PosteriorSample],
    d: usize,
    j: usize,
    bins: usize,
) -> Result<(Vec<Summary>, Vec<Summary>)> {
    let stats = (0..j)
        .map(|k| summarize_values(&samples.iter().map(|s| s.ybar[k]).collect::<Vec<_>>(), bins))
        .collect::<Result<_>>()?;
    let params = (0..d)
        .map(|k| summarize_values(&samples.iter().map(|s| s.theta[k]).collect::<Vec<_>>(), bins))
        .collect::<Result<_>>()?;
    Ok((stats, params))
}

fn resimulate(samples: &mut [PosteriorSample], config: &ExperimentConfig) -> Result<()> {
    if config.simulator.is_stochastic() {
        return Err(config_err("--resimulate needs a deterministic simulator"));
    }
    let mut sim = config.simulator.build(config.param_count())?;
    for s in samples.iter_mut() {
        let y = sim.simulate(&s.theta, 0)?;
        s.ybar = if y.degenerate {
            vec![f64::NAN; y.values.len()]
        } else {
            y.values
        };
    }
    Ok(())
}

/// Summarise one or more completed runs into `opts.report`.
pub fn cmd_analyze(opts: &AnalyzeOptions) -> Result<Report> {
    if opts.runs.is_empty() {
        return Err(config_err("no run directories given"));
    }
    let mut manifests = Vec::new();
    let mut paths = Vec::new();
    let mut missing = Vec::new();
    for run in &opts.runs {
        let m = Manifest::load(run)?;
        if !run.join(COMPLETE_MARKER).exists() {
            log::warn!("{} has no completion marker", run.display());
        }
        for c in &m.chains {
            let p = run.join(&c.file);
            if p.exists() {
                paths.push(p);
            } else {
                missing.push(p.display().to_string());
            }
        }
        manifests.push(m);
    }
    if !missing.is_empty() {
        return Err(PopeError::Analysis(format!(
            "missing trace files: {}",
            missing.join(", ")
        )));
    }
    let first = &manifests[0];
    let (d, j) = (first.param_names.len(), first.stat_count);
    if manifests.iter().any(|m| m.param_names.len() != d || m.stat_count != j) {
        return Err(PopeError::Analysis(
            "runs have different parameter or statistic counts".into(),
        ));
    }
    let config = &first.config;
    let burnin = opts.burnin.unwrap_or(config.run.burnin);
    let bins = opts.bins.unwrap_or(config.analysis.bins);
    if bins == 0 {
        return Err(config_err("bins must be positive"));
    }
    for (stat, _) in &opts.thresholds {
        if *stat >= j {
            return Err(config_err(format!("threshold references statistic {stat} of {j}")));
        }
    }
    let check_axis = |a: &Axis| match *a {
        Axis::Param(k) if k >= d => Err(config_err(format!("parameter axis {k} out of range ({d})"))),
        Axis::Stat(k) if k >= j => Err(config_err(format!("statistic axis {k} out of range ({j})"))),
        _ => Ok(()),
    };
    for (x, y) in &opts.joints {
        check_axis(x)?;
        check_axis(y)?;
    }

    let mut samples = load_traces(&paths, burnin)?;
    if samples.is_empty() {
        return Err(PopeError::Analysis("no samples after burn-in".into()));
    }
    if opts.resimulate {
        resimulate(&mut samples, config)?;
    }
    fs::create_dir_all(&opts.report)?;

    let statistics = (0..j)
        .map(|k| {
            let threshold = opts.thresholds.iter().rev().find(|(s, _)| *s == k).map(|(_, c)| *c);
            summarize_statistic(&samples, k, threshold, bins)
        })
        .collect::<Result<Vec<_>>>()?;
    let parameters = (0..d)
        .map(|k| {
            Ok(ParameterSummary {
                index: k,
                name: first.param_names[k].clone(),
                summary: summarize_parameter(&samples, k, bins)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    for k in 0..d {
        let values: Vec<f64> = samples.iter().map(|s| s.theta[k]).collect();
        Histogram1d::build(&values, bins)
            .write_csv(File::create(opts.report.join(format!("marginal_theta_{k}.csv")))?)?;
    }
    for k in 0..j {
        let values: Vec<f64> = samples.iter().map(|s| s.ybar[k]).collect();
        Histogram1d::build(&values, bins)
            .write_csv(File::create(opts.report.join(format!("marginal_ybar_{k}.csv")))?)?;
    }

    let conditioning = match opts.condition {
        None => None,
        Some(stat) if stat >= j => return Err(config_err(format!("condition references statistic {stat} of {j}"))),
        Some(stat) => {
            let groups = condition_on_discrete(&samples, stat)?
                .into_iter()
                .map(|group| {
                    let members: Vec<&PosteriorSample> = group.members.iter().map(|i| &samples[*i]).collect();
                    let (statistics, parameters) = group_summaries(&members, d, j, bins)?;
                    Ok(GroupReport {
                        group,
                        statistics,
                        parameters,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(Conditioning { stat, groups })
        }
    };

    let mut joint = Vec::new();
    for (x, y) in &opts.joints {
        let h = joint_histogram(&samples, *x, *y, bins)?;
        let stem = format!("joint_{}_{}", x.label(), y.label());
        let csv = format!("{stem}.csv");
        let json = format!("{stem}.json");
        h.write_csv(File::create(opts.report.join(&csv))?)?;
        fs::write(opts.report.join(&json), serde_json::to_string(&h)?)?;
        joint.push(JointReport {
            x: x.label(),
            y: y.label(),
            csv,
            json,
        });
    }

    let report = Report {
        runs: opts.runs.clone(),
        burnin,
        bins,
        sample_count: samples.len(),
        statistics,
        parameters,
        satisfaction_probability: satisfaction_probability(&samples, &config.constraints),
        conditioning,
        joint,
    };
    fs::write(opts.report.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRow {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// Run the configured simulator `replicates` times at `theta` (simulator
/// space) and print one CSV row per replicate followed by their mean.
pub fn cmd_simulate<W: Write>(
    config: &ExperimentConfig,
    theta: &[f64],
    replicates: usize,
    seed: u64,
    out: &mut W,
) -> Result<Vec<SimulatedRow>> {
    let d = config.param_count();
    if theta.len() != d {
        return Err(config_err(format!(
            "theta has {} values, the prior declares {d}",
            theta.len()
        )));
    }
    if replicates == 0 {
        return Err(config_err("replicates must be positive"));
    }
    let spec = SimulatorSpec {
        replicates: 1,
        ..config.simulator.clone()
    };
    let j = spec.output_dim(d);
    let mut sim = spec.build(d)?;
    let mut rows = Vec::with_capacity(replicates);
    for m in 0..replicates {
        let y = sim.simulate(theta, seed::derive(&[seed, m as u64]))?;
        for msg in sim.drain_diagnostics() {
            log::warn!("replicate {m}: {msg}");
        }
        rows.push(SimulatedRow {
            values: y.values,
            degenerate: y.degenerate,
        });
    }
    let any_degenerate = rows.iter().any(|r| r.degenerate);
    let mean: Vec<f64> = (0..j)
        .map(|k| {
            if any_degenerate {
                f64::NAN
            } else {
                rows.iter().map(|r| r.values[k]).sum::<f64>() / replicates as f64
            }
        })
        .collect();

    let header: Vec<String> = std::iter::once("replicate".to_string())
        .chain((0..j).map(|k| format!("y_{k}")))
        .chain(std::iter::once("degenerate".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let fmt = |values: &[f64]| values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    for (m, r) in rows.iter().enumerate() {
        writeln!(
            out,
            "{m},{},{}",
            fmt(&r.values),
            if r.degenerate { "degenerate" } else { "" }
        )?;
    }
    writeln!(
        out,
        "mean,{},{}",
        fmt(&mean),
        if any_degenerate { "degenerate" } else { "" }
    )?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "simulator": {"model": {"kind": "gaussian_toy", "sigma": 1.0}},
        "prior": {"params": [{"name": "theta", "density": {"uniform": {"lo": -5, "hi": 5}}}]},
        "constraints": [{"stat": 0, "direction": "less_eq", "target": 0, "kernel": "heavyside"}],
        "run": {"iterations": 100, "burnin": 10, "mode": "marginal", "likelihood": "kernel_mc", "step_sizes": [1.0]}
    }"#;

    #[test]
    fn defaults_are_materialised() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.analysis.bins, 100);
        assert_eq!(c.run.variance_floor, 1e-12);
        assert_eq!(c.adaptation.freeze_after, Some(10));
        assert_eq!(c.constraints[0].epsilon_min, Some(1.0));
        assert_eq!(c.run.log_walk, vec![false]);
        assert_eq!(c.run.chains, 1);
    }

    #[test]
    fn config_round_trips() {
        let c = parse_config_str(MINIMAL).unwrap();
        let again = parse_config_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = MINIMAL.replace("\"burnin\": 10", "\"burnin\": 10, \"bogus\": 1");
        match parse_config_str(&text).unwrap_err() {
            PopeError::ConfigAt { path, message } => {
                assert_eq!(path, "run.bogus");
                assert!(message.contains("bogus"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
        let text = MINIMAL.replace("\"sigma\": 1.0", "\"sigma\": \"big\"");
        match parse_config_str(&text).unwrap_err() {
            PopeError::ConfigAt { path, .. } => assert!(path.starts_with("simulator.model"), "{path}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn constraint_index_out_of_range() {
        let text = MINIMAL.replace("\"stat\": 0", "\"stat\": 3");
        let msg = parse_config_str(&text).unwrap_err().to_string();
        assert!(msg.contains("statistic 3"), "{msg}");
    }

    #[test]
    fn increment_limits_expand() {
        let text = r#"{
            "simulator": {"model": {"kind": "niche_toy", "target_cells": 10}},
            "prior": {
                "params": [
                    {"name": "g1", "density": {"half_line": {"lo": 0}}},
                    {"name": "g2", "density": {"half_line": {"lo": 0}}},
                    {"name": "g3", "density": {"half_line": {"lo": 0}}},
                    {"name": "g4", "density": {"half_line": {"lo": 0}}}
                ],
                "transform": {"base_offset": 0},
                "increment_limits": {"first_max": 5, "first_epsilon": 1, "increment_max": 10,
                                     "increment_epsilon": 1, "total_max": 100, "total_epsilon": 1}
            },
            "constraints": [{"stat": 0, "direction": "less_eq", "kernel": "gaussian", "adaptive_objective": true}],
            "run": {"iterations": 100, "mode": "pseudo_marginal", "likelihood": "kernel_mc", "step_sizes": [1, 1, 1, 1]}
        }"#;
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.prior.soft_factors.len(), 1 + 3 + 1);
        assert!(c.prior.increment_limits.is_none());
        assert_eq!(c.constraints[0].target, None);
    }

    #[test]
    fn simulate_prints_rows_and_mean() {
        let text = MINIMAL.replace("\"sigma\": 1.0", "\"sigma\": 0.0");
        let c = parse_config_str(&text).unwrap();
        let mut out = Vec::new();
        let rows = cmd_simulate(&c, &[2.5], 1, 0, &mut out).unwrap();
        assert_eq!(rows[0].values, vec![2.5]);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "replicate,y_0,degenerate\n0,2.5,\nmean,2.5,\n");

        let mut out = Vec::new();
        cmd_simulate(&c, &[2.5], 10, 0, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 12);
        assert!(cmd_simulate(&c, &[1.0, 2.0], 1, 0, &mut Vec::new()).is_err());
    }
}
