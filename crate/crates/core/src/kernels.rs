//! Constraint kernels evaluated in log space.
//!
//! A constraint compares one simulator statistic against a target region.
//! Values inside the region score `0` (kernel value 1). Outside it the
//! score depends on the kernel family: the hard Heavyside kernel returns
//! `-inf`, while the soft families penalise the distance `v` to the region
//! either quadratically (`-0.5 (v/eps)^2`) or linearly (`-v/eps`).
//!
//! `Equality` is the ordinary two-sided ABC kernel centred on the target;
//! its Heavyside form is the eps-tube `|value - target| <= eps`.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

static NON_FINITE_EVALUATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of kernel evaluations that received a non-finite statistic.
///
/// A non-zero count usually means a simulator is returning NaN or infinite
/// outputs without flagging them as degenerate.
pub fn non_finite_evaluations() -> u64 {
    NON_FINITE_EVALUATIONS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LessEq,
    GreaterEq,
    Interval,
    Equality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Heavyside,
    Gaussian,
    Exponential,
}

impl KernelFamily {
    pub fn is_soft(self) -> bool {
        !matches!(self, KernelFamily::Heavyside)
    }
}

/// One simulator output: `J` statistics plus a flag marking the run as
/// invalid. Degenerate outputs have zero likelihood regardless of `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatVector {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

impl StatVector {
    pub fn new(values: Vec<f64>) -> Self {
        StatVector {
            values,
            degenerate: false,
        }
    }

    pub fn degenerate(len: usize) -> Self {
        StatVector {
            values: vec![f64::NAN; len],
            degenerate: true,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A constraint on statistic `stat` (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub stat: usize,
    pub direction: Direction,
    /// Threshold for one-sided directions, centre for `Equality`, lower
    /// bound for `Interval`. An adaptive objective may start at `null`,
    /// meaning "no bound yet".
    #[serde(default)]
    pub target: Option<f64>,
    /// Upper bound, only for `Interval`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_high: Option<f64>,
    pub kernel: KernelFamily,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Defaults to `epsilon` when omitted.
    #[serde(default)]
    pub epsilon_min: Option<f64>,
    /// The target is an objective adapted downward (or upward for
    /// `GreaterEq`) while the chain runs.
    #[serde(default)]
    pub adaptive_objective: bool,
}

fn default_epsilon() -> f64 {
    1.0
}

impl ConstraintSpec {
    pub fn new(stat: usize, direction: Direction, target: f64, kernel: KernelFamily, epsilon: f64) -> Self {
        ConstraintSpec {
            stat,
            direction,
            target: Some(target),
            target_high: None,
            kernel,
            epsilon,
            epsilon_min: Some(epsilon),
            adaptive_objective: false,
        }
    }

    pub fn interval(stat: usize, low: f64, high: f64, kernel: KernelFamily, epsilon: f64) -> Self {
        ConstraintSpec {
            target_high: Some(high),
            ..ConstraintSpec::new(stat, Direction::Interval, low, kernel, epsilon)
        }
    }

    pub fn epsilon_floor(&self) -> f64 {
        self.epsilon_min.unwrap_or(self.epsilon)
    }

    /// The unset target of an adaptive objective is the unbounded side.
    pub fn initial_target(&self) -> f64 {
        match (self.target, self.direction) {
            (Some(t), _) => t,
            (None, Direction::GreaterEq) => f64::NEG_INFINITY,
            (None, _) => f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_soft() || self.direction == Direction::Equality {
            let floor = self.epsilon_floor();
            if !(floor > 0.0) {
                return Err(config_err(format!(
                    "constraint on stat {}: epsilon_min must be positive",
                    self.stat
                )));
            }
            if !(self.epsilon >= floor) {
                return Err(config_err(format!(
                    "constraint on stat {}: epsilon ({}) below epsilon_min ({floor})",
                    self.stat, self.epsilon
                )));
            }
        }
        match self.direction {
            Direction::Interval => {
                let (Some(lo), Some(hi)) = (self.target, self.target_high) else {
                    return Err(config_err(format!(
                        "interval constraint on stat {} needs target and target_high",
                        self.stat
                    )));
                };
                if !(lo <= hi) {
                    return Err(config_err(format!(
                        "interval constraint on stat {}: target ({lo}) exceeds target_high ({hi})",
                        self.stat
                    )));
                }
            }
            _ if self.target_high.is_some() => {
                return Err(config_err(format!(
                    "target_high is only valid for interval constraints (stat {})",
                    self.stat
                )));
            }
            Direction::Equality if self.target.is_none() => {
                return Err(config_err(format!(
                    "equality constraint on stat {} needs a target",
                    self.stat
                )));
            }
            _ => {}
        }
        if self.adaptive_objective && !matches!(self.direction, Direction::LessEq | Direction::GreaterEq) {
            return Err(config_err(format!(
                "adaptive objective on stat {} must be less_eq or greater_eq",
                self.stat
            )));
        }
        if !self.adaptive_objective && self.target.is_none() {
            return Err(config_err(format!(
                "constraint on stat {} has no target and is not an adaptive objective",
                self.stat
            )));
        }
        Ok(())
    }

    /// Distance from `value` to the satisfied region, measured against
    /// `target` (which overrides the configured target for adaptive
    /// objectives). Zero inside the region.
    pub fn violation_at(&self, value: f64, target: f64) -> f64 {
        match self.direction {
            Direction::LessEq => (value - target).max(0.0),
            Direction::GreaterEq => (target - value).max(0.0),
            Direction::Interval => {
                let hi = self.target_high.unwrap_or(target);
                if value < target {
                    target - value
                } else if value > hi {
                    value - hi
                } else {
                    0.0
                }
            }
            Direction::Equality => (value - target).abs(),
        }
    }

    pub fn violation(&self, value: f64) -> f64 {
        self.violation_at(value, self.initial_target())
    }

    /// Hard-region membership (the Heavyside kernel's support).
    pub fn is_satisfied_at(&self, value: f64, target: f64, epsilon: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        let v = self.violation_at(value, target);
        match self.direction {
            Direction::Equality => v <= epsilon,
            _ => v == 0.0,
        }
    }
}

/// `log K(value)` with the constraint's own target and epsilon.
pub fn log_kernel(value: f64, spec: &ConstraintSpec) -> f64 {
    log_kernel_at(value, spec, spec.initial_target(), spec.epsilon)
}

/// `log K(value)` with an explicit target and epsilon, as used while
/// adapting both.
pub fn log_kernel_at(value: f64, spec: &ConstraintSpec, target: f64, epsilon: f64) -> f64 {
    if !value.is_finite() {
        NON_FINITE_EVALUATIONS.fetch_add(1, Ordering::Relaxed);
        return f64::NEG_INFINITY;
    }
    let v = spec.violation_at(value, target);
    match (spec.kernel, spec.direction) {
        (KernelFamily::Heavyside, Direction::Equality) => {
            if v <= epsilon {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        (KernelFamily::Heavyside, _) => {
            if v == 0.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        (KernelFamily::Gaussian, _) => {
            let r = v / epsilon;
            -0.5 * r * r
        }
        (KernelFamily::Exponential, _) => -(v / epsilon),
    }
}

/// Sum of per-constraint log kernels over one output.
///
/// `targets` and `epsilons`, when given, override each spec's own values
/// (one entry per spec). Degenerate outputs score `-inf` before any kernel
/// is evaluated.
pub fn joint_log_kernel(
    stats: &StatVector,
    specs: &[ConstraintSpec],
    targets: Option<&[f64]>,
    epsilons: Option<&[f64]>,
) -> Result<f64> {
    check_dims(stats.len(), specs, targets, epsilons)?;
    if stats.degenerate {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = 0.0;
    for (k, spec) in specs.iter().enumerate() {
        let target = targets.map_or_else(|| spec.initial_target(), |t| t[k]);
        let eps = epsilons.map_or(spec.epsilon, |e| e[k]);
        total += log_kernel_at(stats.values[spec.stat], spec, target, eps);
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    Ok(total)
}

pub(crate) fn check_dims(
    stat_count: usize,
    specs: &[ConstraintSpec],
    targets: Option<&[f64]>,
    epsilons: Option<&[f64]>,
) -> Result<()> {
    if let Some(bad) = specs.iter().find(|s| s.stat >= stat_count) {
        return Err(config_err(format!(
            "constraint references stat {} but the simulator produces {stat_count} statistics",
            bad.stat
        )));
    }
    for (name, over) in [("targets", targets), ("epsilons", epsilons)] {
        if let Some(o) = over {
            if o.len() != specs.len() {
                return Err(config_err(format!(
                    "{} has {} entries for {} constraints",
                    name,
                    o.len(),
                    specs.len()
                )));
            }
        }
    }
    Ok(())
}
