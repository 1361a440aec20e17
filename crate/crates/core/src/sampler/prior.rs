//! Priors over the sampled parameters.
//!
//! The log prior is the sum of per-parameter base log densities and of soft
//! factors, each a one-sided kernel applied to a linear functional of the
//! sampled vector or of the simulator vector. Hard bounds give `-inf`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::kernels::{log_kernel, ConstraintSpec, Direction, KernelFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseDensity {
    /// Flat on `[lo, hi]`; contributes 0 inside.
    Uniform { lo: f64, hi: f64 },
    /// Normalised log-normal density on `(0, inf)`.
    LogNormal { mu: f64, sigma: f64 },
    /// Normalised beta density on `(0, 1)`.
    Beta { alpha: f64, beta: f64 },
    /// Flat, improper density on `[lo, inf)`; contributes 0 inside.
    /// Initialisation draws start points as `lo + init_scale * Exp(1)`.
    HalfLine {
        lo: f64,
        #[serde(default = "one")]
        init_scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl BaseDensity {
    fn support(&self) -> (f64, f64) {
        match *self {
            BaseDensity::Uniform { lo, hi } => (lo, hi),
            BaseDensity::LogNormal { .. } => (0.0, f64::INFINITY),
            BaseDensity::Beta { .. } => (0.0, 1.0),
            BaseDensity::HalfLine { lo, .. } => (lo, f64::INFINITY),
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return f64::NEG_INFINITY;
        }
        match *self {
            BaseDensity::Uniform { .. } | BaseDensity::HalfLine { .. } => 0.0,
            BaseDensity::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = (x.ln() - mu) / sigma;
                -x.ln() - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z
            }
            BaseDensity::Beta { alpha, beta } => {
                if x <= 0.0 || x >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - log_beta_fn(alpha, beta)
            }
        }
    }

    /// A starting-point draw for rejection initialisation.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            BaseDensity::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            BaseDensity::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").sample(rng),
            BaseDensity::Beta { alpha, beta } => Beta::new(alpha, beta).expect("validated").sample(rng),
            BaseDensity::HalfLine { lo, init_scale } => {
                let e: f64 = Exp1.sample(rng);
                lo + init_scale * e
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            BaseDensity::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            BaseDensity::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0 && sigma.is_finite(),
            BaseDensity::Beta { alpha, beta } => alpha > 0.0 && beta > 0.0,
            BaseDensity::HalfLine { lo, init_scale } => lo.is_finite() && init_scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(config_err(format!(
                "invalid base density for parameter `{name}`: {self:?}"
            )))
        }
    }
}

fn log_beta_fn(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamPrior {
    pub name: String,
    pub density: BaseDensity,
    /// Extra hard bounds on top of the density's support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl ParamPrior {
    pub fn new(name: impl Into<String>, density: BaseDensity) -> Self {
        ParamPrior {
            name: name.into(),
            density,
            lower: None,
            upper: None,
        }
    }

    pub fn in_bounds(&self, x: f64) -> bool {
        x.is_finite() && self.lower.is_none_or(|lo| x >= lo) && self.upper.is_none_or(|hi| x <= hi)
    }

    /// Smallest admissible value once both bounds are combined.
    pub fn lower_bound(&self) -> f64 {
        self.density.support().0.max(self.lower.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Cumulative map from sampled increments `g` to simulator parameters:
/// `theta_1 = base_offset + g_1`, `theta_d = theta_{d-1} + g_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncrementTransform {
    pub base_offset: f64,
}

impl IncrementTransform {
    pub fn apply(&self, increments: &[f64]) -> Vec<f64> {
        increments
            .iter()
            .scan(self.base_offset, |acc, g| {
                *acc += g;
                Some(*acc)
            })
            .collect()
    }
}

/// A linear functional of the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// One entry of the sampled vector.
    Sampled(usize),
    /// One entry of the simulator vector.
    Simulator(usize),
    SampledTotal,
    SimulatorTotal,
}

impl Functional {
    fn eval(&self, sampled: &[f64], simulator: &[f64]) -> f64 {
        match *self {
            Functional::Sampled(d) => sampled[d],
            Functional::Simulator(d) => simulator[d],
            Functional::SampledTotal => sampled.iter().sum(),
            Functional::SimulatorTotal => simulator.iter().sum(),
        }
    }

    fn index(&self) -> Option<usize> {
        match *self {
            Functional::Sampled(d) | Functional::Simulator(d) => Some(d),
            _ => None,
        }
    }
}

/// A soft kernel on a parameter functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftFactor {
    pub functional: Functional,
    pub direction: Direction,
    pub target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_high: Option<f64>,
    #[serde(default = "gaussian")]
    pub kernel: KernelFamily,
    pub epsilon: f64,
}

fn gaussian() -> KernelFamily {
    KernelFamily::Gaussian
}

impl SoftFactor {
    pub fn at_most(functional: Functional, target: f64, epsilon: f64) -> Self {
        SoftFactor {
            functional,
            direction: Direction::LessEq,
            target,
            target_high: None,
            kernel: KernelFamily::Gaussian,
            epsilon,
        }
    }

    fn as_constraint(&self) -> ConstraintSpec {
        ConstraintSpec {
            target_high: self.target_high,
            ..ConstraintSpec::new(0, self.direction, self.target, self.kernel, self.epsilon)
        }
    }

    pub fn log_value(&self, sampled: &[f64], simulator: &[f64]) -> f64 {
        log_kernel(self.functional.eval(sampled, simulator), &self.as_constraint())
    }
}

/// Shorthand for niche-geometry style priors over increments: an upper
/// limit on the first increment, on every later increment, and on the total
/// simulator size. Expands into `1 + (D - 1) + 1` soft factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncrementLimits {
    pub first_max: f64,
    pub first_epsilon: f64,
    pub increment_max: f64,
    pub increment_epsilon: f64,
    pub total_max: f64,
    pub total_epsilon: f64,
}

impl IncrementLimits {
    pub fn expand(&self, dim: usize) -> Vec<SoftFactor> {
        let mut factors = vec![
            SoftFactor::at_most(Functional::SimulatorTotal, self.total_max, self.total_epsilon),
            SoftFactor::at_most(Functional::Sampled(0), self.first_max, self.first_epsilon),
        ];
        factors.extend(
            (1..dim).map(|d| SoftFactor::at_most(Functional::Sampled(d), self.increment_max, self.increment_epsilon)),
        );
        factors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub params: Vec<ParamPrior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<IncrementTransform>,
    #[serde(default)]
    pub soft_factors: Vec<SoftFactor>,
    /// Expanded into `soft_factors` by [`PriorSpec::materialize`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment_limits: Option<IncrementLimits>,
}

impl PriorSpec {
    pub fn new(params: Vec<ParamPrior>) -> Self {
        PriorSpec {
            params,
            transform: None,
            soft_factors: Vec::new(),
            increment_limits: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    /// Expand shorthands so the spec holds only explicit soft factors.
    pub fn materialize(&mut self) {
        if let Some(limits) = self.increment_limits.take() {
            let mut expanded = limits.expand(self.dim());
            expanded.append(&mut self.soft_factors);
            self.soft_factors = expanded;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.is_empty() {
            return Err(config_err("prior declares no parameters"));
        }
        for p in &self.params {
            p.density.validate(&p.name)?;
        }
        for (k, f) in self.soft_factors.iter().enumerate() {
            if f.functional.index().is_some_and(|d| d >= self.dim()) {
                return Err(config_err(format!(
                    "soft factor {k} references parameter {} of {}",
                    f.functional.index().unwrap(),
                    self.dim()
                )));
            }
            if f.direction == Direction::Equality {
                return Err(config_err(format!("soft factor {k} cannot be an equality")));
            }
            f.as_constraint()
                .validate()
                .map_err(|e| config_err(format!("soft factor {k}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_simulator(&self, sampled: &[f64]) -> Vec<f64> {
        match &self.transform {
            Some(t) => t.apply(sampled),
            None => sampled.to_vec(),
        }
    }

    /// Unnormalised log prior of a sampled vector.
    pub fn log_prior(&self, sampled: &[f64]) -> f64 {
        assert_eq!(sampled.len(), self.dim(), "parameter dimension mismatch");
        let mut total = 0.0;
        for (p, &x) in self.params.iter().zip(sampled) {
            if !p.in_bounds(x) {
                return f64::NEG_INFINITY;
            }
            total += p.density.log_density(x);
            if total == f64::NEG_INFINITY {
                return total;
            }
        }
        let simulator = self.to_simulator(sampled);
        total
            + self
                .soft_factors
                .iter()
                .map(|f| f.log_value(sampled, &simulator))
                .sum::<f64>()
    }

    /// One draw from the base densities.
    pub fn sample_base(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.params.iter().map(|p| p.density.sample(rng)).collect()
    }
}
