//! Trace I/O and posterior summaries.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{PopeError, Result};
use crate::kernels::ConstraintSpec;
use crate::sampler::TraceRecord;

pub const DEFAULT_BINS: usize = 100;
pub const DISCRETE_TOLERANCE: f64 = 1e-6;

/// A stored `{theta, ybar}` pair from a post-burn-in trace record.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub chain: usize,
    pub step: usize,
    pub theta: Vec<f64>,
    pub ybar: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub ystar: Vec<f64>,
}

pub fn trace_header(params: usize, stats: usize) -> Vec<String> {
    let mut header: Vec<String> = ["step", "accepted", "log_likelihood", "log_prior"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..params).map(|d| format!("theta_{d}")));
    for prefix in ["ybar", "eps", "ystar"] {
        header.extend((0..stats).map(|j| format!("{prefix}_{j}")));
    }
    header
}

/// Streams trace records as CSV. Floats use Rust's shortest round-trip
/// formatting, so output bytes are a pure function of the values.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    params: usize,
    stats: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(writer: W, params: usize, stats: usize) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(trace_header(params, stats))?;
        Ok(TraceWriter { inner, params, stats })
    }

    pub fn write(&mut self, r: &TraceRecord) -> Result<()> {
        if r.theta.len() != self.params || r.ybar.len() != self.stats {
            return Err(PopeError::Analysis(format!(
                "record at step {} has {} params and {} stats, expected {} and {}",
                r.step,
                r.theta.len(),
                r.ybar.len(),
                self.params,
                self.stats
            )));
        }
        let mut row = vec![
            r.step.to_string(),
            u8::from(r.accepted).to_string(),
            r.log_likelihood.to_string(),
            r.log_prior.to_string(),
        ];
        for v in r.theta.iter().chain(&r.ybar).chain(&r.epsilon).chain(&r.ystar) {
            row.push(v.to_string());
        }
        self.inner.write_record(&row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn chain_id_from_path(path: &Path) -> Option<usize> {
    path.file_stem()?.to_str()?.strip_prefix("chain_")?.parse().ok()
}

/// Read one trace file, dropping the first `burnin` records.
pub fn load_trace(path: &Path, chain: usize, burnin: usize) -> Result<Vec<PosteriorSample>> {
    let parse_err = |line: usize, message: String| PopeError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let params = header.iter().filter(|h| h.starts_with("theta_")).count();
    let stats = header.iter().filter(|h| h.starts_with("ybar_")).count();
    if header != trace_header(params, stats) {
        return Err(parse_err(1, "unexpected trace header".into()));
    }

    let mut samples = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        rows += 1;
        if i < burnin {
            continue;
        }
        let step: usize = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad step `{}`", &record[0])))?;
        let mut values = Vec::with_capacity(record.len() - 4);
        for (col, field) in record.iter().enumerate().skip(4) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("bad number `{field}` in column `{}`", header[col])))?;
            values.push(v);
        }
        let (theta, rest) = values.split_at(params);
        let (ybar, rest) = rest.split_at(stats);
        let (epsilon, ystar) = rest.split_at(stats);
        samples.push(PosteriorSample {
            chain,
            step,
            theta: theta.to_vec(),
            ybar: ybar.to_vec(),
            epsilon: epsilon.to_vec(),
            ystar: ystar.to_vec(),
        });
    }
    if burnin >= rows {
        return Err(PopeError::Config(format!(
            "burnin {burnin} >= trace length {rows} in {}",
            path.display()
        )));
    }
    Ok(samples)
}

/// Concatenate post-burn-in samples from several trace files.
pub fn load_traces(paths: &[PathBuf], burnin: usize) -> Result<Vec<PosteriorSample>> {
    if paths.is_empty() {
        log::warn!("no trace files given");
    }
    let mut out = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let chain = chain_id_from_path(path).unwrap_or(i);
        out.extend(load_trace(path, chain, burnin)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean and median are exact; mode is the midpoint of the tallest of `bins`
/// equal bins over the sample range (first bin wins ties). The mean sums
/// sorted values so it does not depend on input order.
pub fn summarize_values(values: &[f64], bins: usize) -> Result<Summary> {
    if values.is_empty() {
        return Err(PopeError::Analysis("cannot summarise zero samples".into()));
    }
    if bins == 0 {
        return Err(PopeError::Analysis("bins must be positive".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let (min, max) = (sorted[0], sorted[n - 1]);
    let hist = Histogram1d::build(&sorted, bins);
    let peak = hist
        .counts
        .iter()
        .enumerate()
        .fold(0, |best, (i, c)| if *c > hist.counts[best] { i } else { best });
    let mode = if hist.counts.len() == 1 {
        min
    } else {
        0.5 * (hist.edges[peak] + hist.edges[peak + 1])
    };
    Ok(Summary {
        count: n,
        mean,
        median,
        mode,
        min,
        max,
    })
}

/// Fraction of values strictly below `c`.
pub fn fraction_below(values: &[f64], c: f64) -> f64 {
    values.iter().filter(|v| **v < c).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatisticSummary {
    pub stat: usize,
    #[serde(flatten)]
    pub summary: Summary,
    pub threshold: Option<f64>,
    pub p_below_threshold: Option<f64>,
    /// Fraction of samples whose `ybar` is strictly below that sample's own
    /// `y*`; absent when the statistic has no objective.
    pub p_below_ystar: Option<f64>,
}

pub fn summarize_statistic(
    samples: &[PosteriorSample],
    j: usize,
    threshold: Option<f64>,
    bins: usize,
) -> Result<StatisticSummary> {
    let values: Vec<f64> = samples.iter().map(|s| s.ybar[j]).collect();
    let summary = summarize_values(&values, bins)?;
    let p_below_ystar = if samples.iter().all(|s| !s.ystar[j].is_nan()) {
        Some(samples.iter().filter(|s| s.ybar[j] < s.ystar[j]).count() as f64 / samples.len() as f64)
    } else {
        None
    };
    Ok(StatisticSummary {
        stat: j,
        summary,
        threshold,
        p_below_threshold: threshold.map(|c| fraction_below(&values, c)),
        p_below_ystar,
    })
}

pub fn summarize_parameter(samples: &[PosteriorSample], d: usize, bins: usize) -> Result<Summary> {
    let values: Vec<f64> = samples.iter().map(|s| s.theta[d]).collect();
    summarize_values(&values, bins)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteGroup {
    pub value: i64,
    pub count: usize,
    pub fraction: f64,
    #[serde(skip)]
    pub members: Vec<usize>,
}

/// Partition samples by the integer value of statistic `j`. Groups are
/// sorted by value; `members` index into `samples`.
pub fn condition_on_discrete(samples: &[PosteriorSample], j: usize) -> Result<Vec<DiscreteGroup>> {
    if samples.is_empty() {
        return Err(PopeError::Analysis("cannot condition zero samples".into()));
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let v = s.ybar[j];
        let r = v.round();
        if !((v - r).abs() <= DISCRETE_TOLERANCE) {
            return Err(PopeError::Analysis(format!(
                "statistic {j} takes non-integer value {v} (chain {}, step {}); is it continuous?",
                s.chain, s.step
            )));
        }
        groups.entry(r as i64).or_default().push(i);
    }
    let n = samples.len() as f64;
    Ok(groups
        .into_iter()
        .map(|(value, members)| DiscreteGroup {
            value,
            count: members.len(),
            fraction: members.len() as f64 / n,
            members,
        })
        .collect())
}

/// Fraction of samples whose stored `ybar` lies inside every constraint
/// region. Adaptive objectives use the sample's own `y*`.
pub fn satisfaction_probability(samples: &[PosteriorSample], specs: &[ConstraintSpec]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let ok = samples
        .iter()
        .filter(|s| {
            specs.iter().all(|c| {
                let target = if c.adaptive_objective {
                    s.ystar[c.stat]
                } else {
                    c.initial_target()
                };
                c.is_satisfied_at(s.ybar[c.stat], target, c.epsilon_floor())
            })
        })
        .count();
    ok as f64 / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Param(usize),
    Stat(usize),
}

impl Axis {
    pub fn value(&self, s: &PosteriorSample) -> f64 {
        match *self {
            Axis::Param(d) => s.theta[d],
            Axis::Stat(j) => s.ybar[j],
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Axis::Param(d) => format!("theta_{d}"),
            Axis::Stat(j) => format!("ybar_{j}"),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = PopeError;

    /// Accepts `theta_<d>`, `param=<d>`, `ybar_<j>` or `stat=<j>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || PopeError::Config(format!("bad axis `{s}`; use theta_<d> or ybar_<j>"));
        let (kind, idx) = s.split_once('_').or_else(|| s.split_once('=')).ok_or_else(bad)?;
        let idx: usize = idx.parse().map_err(|_| bad())?;
        match kind {
            "theta" | "param" => Ok(Axis::Param(idx)),
            "ybar" | "stat" => Ok(Axis::Stat(idx)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram1d {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram1d {
    /// Equal-width bins over `[min, max]`; the maximum lands in the last
    /// bin. A zero-width range collapses to a single bin.
    pub fn build(values: &[f64], bins: usize) -> Self {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if !(hi > lo) {
            return Histogram1d {
                edges: vec![lo, hi],
                counts: vec![values.len()],
            };
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 })
            .collect();
        let mut counts = vec![0; bins];
        for v in values {
            counts[bin_index(*v, lo, hi, bins)] += 1;
        }
        Histogram1d { edges, counts }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lo", "hi", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([self.edges[i].to_string(), self.edges[i + 1].to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let i = ((v - lo) / (hi - lo) * bins as f64).floor();
    (i.max(0.0) as usize).min(bins - 1)
}

/// Normalised 2-D histogram; `density[a][b]` is the mass of cell `(a, b)`
/// with `a` along the first axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointHistogram {
    pub x_label: String,
    pub y_label: String,
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub counts: Vec<Vec<usize>>,
    pub density: Vec<Vec<f64>>,
}

pub fn joint_histogram(samples: &[PosteriorSample], x: Axis, y: Axis, bins: usize) -> Result<JointHistogram> {
    if bins < 2 {
        return Err(PopeError::Analysis(
            "joint histograms need at least 2 bins per axis".into(),
        ));
    }
    if samples.is_empty() {
        return Err(PopeError::Analysis("cannot histogram zero samples".into()));
    }
    let xs: Vec<f64> = samples.iter().map(|s| x.value(s)).collect();
    let ys: Vec<f64> = samples.iter().map(|s| y.value(s)).collect();
    let hx = Histogram1d::build(&xs, bins);
    let hy = Histogram1d::build(&ys, bins);
    for (h, axis) in [(&hx, x), (&hy, y)] {
        if h.counts.len() == 1 {
            log::warn!("{} has zero range; using a single bin", axis.label());
        }
    }
    let (nx, ny) = (hx.counts.len(), hy.counts.len());
    let mut counts = vec![vec![0usize; ny]; nx];
    for (xv, yv) in xs.iter().zip(&ys) {
        let a = if nx == 1 {
            0
        } else {
            bin_index(*xv, hx.edges[0], hx.edges[nx], nx)
        };
        let b = if ny == 1 {
            0
        } else {
            bin_index(*yv, hy.edges[0], hy.edges[ny], ny)
        };
        counts[a][b] += 1;
    }
    let n = samples.len() as f64;
    let density = counts
        .iter()
        .map(|row| row.iter().map(|c| *c as f64 / n).collect())
        .collect();
    Ok(JointHistogram {
        x_label: x.label(),
        y_label: y.label(),
        x_edges: hx.edges,
        y_edges: hy.edges,
        counts,
        density,
    })
}

impl JointHistogram {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x_lo", "x_hi", "y_lo", "y_hi", "count", "density"])?;
        for (a, row) in self.counts.iter().enumerate() {
            for (b, c) in row.iter().enumerate() {
                w.write_record([
                    self.x_edges[a].to_string(),
                    self.x_edges[a + 1].to_string(),
                    self.y_edges[b].to_string(),
                    self.y_edges[b + 1].to_string(),
                    c.to_string(),
                    self.density[a][b].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
