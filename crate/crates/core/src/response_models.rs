//! Likelihood estimates from `S` simulator draws at one parameter value.
//!
//! Three routes are provided:
//!
//! * `KernelMc`: the Monte Carlo kernel average `(1/S) sum_s prod_j K(y_sj)`.
//!   With Heavyside kernels this is an unbiased estimate of the probability
//!   that a run satisfies every constraint.
//! * `SyntheticGaussian`: fit a factorised Gaussian to the draws and take
//!   the exact normal probability of each constraint region.
//! * `Kde`: a Gaussian kernel density per statistic (Silverman bandwidth)
//!   and the mixture probability of each constraint region.
//!
//! The last two use hard constraint regions only; soft kernels are a
//! `KernelMc` feature.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::kernels::{check_dims, joint_log_kernel, ConstraintSpec, Direction, StatVector};
use crate::normal::{log_cdf, log_cdf_diff, log_sum_exp};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    KernelMc,
    SyntheticGaussian,
    Kde,
}

/// Per-statistic moments of `S` draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSummary {
    pub mean: Vec<f64>,
    /// Unbiased variance, floored.
    pub variance: Vec<f64>,
    pub draw_count: usize,
}

/// Log of the Monte Carlo kernel estimate, via log-sum-exp.
pub fn mc_kernel_log_likelihood(
    draws: &[StatVector],
    specs: &[ConstraintSpec],
    targets: Option<&[f64]>,
    epsilons: Option<&[f64]>,
) -> Result<f64> {
    if draws.is_empty() {
        return Err(config_err("likelihood estimate needs at least one draw"));
    }
    let per_draw = draws
        .iter()
        .map(|y| joint_log_kernel(y, specs, targets, epsilons))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(per_draw) - (draws.len() as f64).ln())
}

/// Sample mean and unbiased variance per statistic. A single draw, or a
/// set of identical draws, gets the floor variance.
pub fn fit_gaussian_summary(draws: &[StatVector], variance_floor: f64) -> ResponseSummary {
    let s = draws.len();
    let j = draws.first().map_or(0, StatVector::len);
    let mut mean = vec![0.0; j];
    for y in draws {
        for (m, v) in mean.iter_mut().zip(&y.values) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= s as f64);
    let variance = (0..j)
        .map(|k| {
            if s < 2 {
                return variance_floor;
            }
            let ss: f64 = draws.iter().map(|y| (y.values[k] - mean[k]).powi(2)).sum();
            (ss / (s - 1) as f64).max(variance_floor)
        })
        .collect();
    ResponseSummary {
        mean,
        variance,
        draw_count: s,
    }
}

/// `sum_j log P(y_j in region_j)` under the fitted factorised Gaussian.
pub fn gaussian_cdf_log_likelihood(
    summary: &ResponseSummary,
    specs: &[ConstraintSpec],
    targets: Option<&[f64]>,
) -> Result<f64> {
    check_dims(summary.mean.len(), specs, targets, None)?;
    let mut total = 0.0;
    for (k, spec) in specs.iter().enumerate() {
        let target = targets.map_or_else(|| spec.initial_target(), |t| t[k]);
        let mu = summary.mean[spec.stat];
        let sd = summary.variance[spec.stat].sqrt();
        total += log_region_mass(spec, target, |x| (x - mu) / sd)?;
    }
    Ok(total)
}

/// Log probability of the spec's region for a unit normal after the affine
/// map `standardize`.
fn log_region_mass(spec: &ConstraintSpec, target: f64, standardize: impl Fn(f64) -> f64) -> Result<f64> {
    Ok(match spec.direction {
        Direction::LessEq => log_cdf(standardize(target)),
        Direction::GreaterEq => log_cdf(-standardize(target)),
        Direction::Interval => {
            let hi = spec.target_high.unwrap_or(target);
            log_cdf_diff(standardize(target), standardize(hi))
        }
        Direction::Equality => {
            return Err(config_err(format!(
                "equality constraint on stat {} has no region probability; use kernel_mc",
                spec.stat
            )))
        }
    })
}

/// Silverman bandwidth `1.06 sd S^(-1/5)` with the variance floor applied
/// to `sd`.
pub fn silverman_bandwidth(values: &[f64], variance_floor: f64) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.max(variance_floor).sqrt() * n.powf(-0.2)
}

/// `sum_j log` of the Gaussian-mixture mass of each constraint region.
pub fn kde_log_likelihood(
    draws: &[StatVector],
    specs: &[ConstraintSpec],
    targets: Option<&[f64]>,
    variance_floor: f64,
) -> Result<f64> {
    if draws.len() < 2 {
        return Err(config_err("kde likelihood needs at least two draws"));
    }
    check_dims(draws[0].len(), specs, targets, None)?;
    let log_s = (draws.len() as f64).ln();
    let mut total = 0.0;
    for (k, spec) in specs.iter().enumerate() {
        let target = targets.map_or_else(|| spec.initial_target(), |t| t[k]);
        let column: Vec<f64> = draws.iter().map(|y| y.values[spec.stat]).collect();
        let h = silverman_bandwidth(&column, variance_floor);
        let components = column
            .iter()
            .map(|&c| log_region_mass(spec, target, |x| (x - c) / h))
            .collect::<Result<Vec<_>>>()?;
        total += log_sum_exp(components) - log_s;
    }
    Ok(total)
}

/// Likelihood estimator configured once per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseModel {
    pub mode: LikelihoodMode,
    pub variance_floor: f64,
}

impl ResponseModel {
    pub fn new(mode: LikelihoodMode) -> Self {
        ResponseModel {
            mode,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }

    pub fn min_draws(&self) -> usize {
        match self.mode {
            LikelihoodMode::Kde => 2,
            _ => 1,
        }
    }

    pub fn validate(&self, specs: &[ConstraintSpec]) -> Result<()> {
        if !(self.variance_floor > 0.0) {
            return Err(config_err("variance_floor must be positive"));
        }
        if self.mode != LikelihoodMode::KernelMc {
            if let Some(s) = specs.iter().find(|s| s.direction == Direction::Equality) {
                return Err(config_err(format!(
                    "equality constraint on stat {} requires kernel_mc likelihood",
                    s.stat
                )));
            }
        }
        Ok(())
    }

    /// Log-likelihood of a location from its draws. Any degenerate draw
    /// makes the location's likelihood zero.
    pub fn log_likelihood(
        &self,
        draws: &[StatVector],
        specs: &[ConstraintSpec],
        targets: &[f64],
        epsilons: &[f64],
    ) -> Result<f64> {
        if draws.len() < self.min_draws() {
            return Err(config_err(format!(
                "{:?} likelihood needs at least {} draws, got {}",
                self.mode,
                self.min_draws(),
                draws.len()
            )));
        }
        if draws.iter().any(|y| y.degenerate) {
            return Ok(f64::NEG_INFINITY);
        }
        match self.mode {
            LikelihoodMode::KernelMc => mc_kernel_log_likelihood(draws, specs, Some(targets), Some(epsilons)),
            LikelihoodMode::SyntheticGaussian => {
                let summary = fit_gaussian_summary(draws, self.variance_floor);
                gaussian_cdf_log_likelihood(&summary, specs, Some(targets))
            }
            LikelihoodMode::Kde => kde_log_likelihood(draws, specs, Some(targets), self.variance_floor),
        }
    }
}
