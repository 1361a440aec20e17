//! Online adaptation of objective targets and kernel epsilons.
//!
//! Objectives track an exponential moving average of the per-step mean
//! statistic and keep the best value seen. Epsilons track an EMA of the
//! constraint violations, scaled by `beta` and floored at `epsilon_min`.
//! Both stop at `freeze_after`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::kernels::{ConstraintSpec, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationConfig {
    /// Objective EMA weight; 1 tracks the latest mean exactly.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Violation EMA weight.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Multiplier on the violation EMA.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub adapt_epsilons: bool,
    /// Last adapting step is `freeze_after - 1`. Defaults to the burn-in.
    #[serde(default)]
    pub freeze_after: Option<usize>,
}

fn default_gamma() -> f64 {
    0.1
}

fn default_delta() -> f64 {
    0.1
}

fn default_beta() -> f64 {
    0.9
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            gamma: default_gamma(),
            delta: default_delta(),
            beta: default_beta(),
            adapt_epsilons: false,
            freeze_after: None,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("delta", self.delta), ("beta", self.beta)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(config_err(format!("adaptation.{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-constraint adaptation state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationState {
    pub ystar: Vec<f64>,
    pub y_ema: Vec<Option<f64>>,
    pub eps: Vec<f64>,
    pub eps_ema: Vec<f64>,
    pub eps_min: Vec<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub beta: f64,
    pub adapt_epsilons: bool,
    pub freeze_after: usize,
}

impl AdaptationState {
    pub fn new(specs: &[ConstraintSpec], cfg: &AdaptationConfig, freeze_after: usize) -> Self {
        AdaptationState {
            ystar: specs.iter().map(ConstraintSpec::initial_target).collect(),
            y_ema: vec![None; specs.len()],
            eps: specs.iter().map(|s| s.epsilon).collect(),
            eps_ema: specs.iter().map(|s| s.epsilon).collect(),
            eps_min: specs.iter().map(ConstraintSpec::epsilon_floor).collect(),
            gamma: cfg.gamma,
            delta: cfg.delta,
            beta: cfg.beta,
            adapt_epsilons: cfg.adapt_epsilons,
            freeze_after,
        }
    }

    pub fn is_active(&self, step: usize) -> bool {
        step < self.freeze_after
    }

    /// EMA-and-best update for constraints flagged as adaptive objectives.
    /// Non-finite means (degenerate steps) are skipped.
    pub fn update_objectives(&mut self, specs: &[ConstraintSpec], ybar: &[f64]) {
        for (k, spec) in specs.iter().enumerate() {
            if !spec.adaptive_objective {
                continue;
            }
            let y = ybar[spec.stat];
            if !y.is_finite() {
                continue;
            }
            let ema = match self.y_ema[k] {
                None => y,
                Some(e) => (1.0 - self.gamma) * e + self.gamma * y,
            };
            self.y_ema[k] = Some(ema);
            self.ystar[k] = match spec.direction {
                Direction::GreaterEq => self.ystar[k].max(ema),
                _ => self.ystar[k].min(ema),
            };
        }
    }

    /// Violation-EMA update for every soft constraint.
    pub fn update_epsilons(&mut self, specs: &[ConstraintSpec], ybar: &[f64]) {
        for (k, spec) in specs.iter().enumerate() {
            if !spec.kernel.is_soft() {
                continue;
            }
            let violation = spec.violation_at(ybar[spec.stat], self.ystar[k]);
            if !violation.is_finite() {
                continue;
            }
            self.eps_ema[k] = (1.0 - self.delta) * self.eps_ema[k] + self.delta * violation;
            self.eps[k] = self.eps_min[k].max(self.beta * self.eps_ema[k]);
        }
    }

    /// Both updates, if `step` is before the freeze.
    pub fn update(&mut self, specs: &[ConstraintSpec], ybar: &[f64], step: usize) {
        if !self.is_active(step) {
            return;
        }
        self.update_objectives(specs, ybar);
        if self.adapt_epsilons {
            self.update_epsilons(specs, ybar);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;

    fn objective() -> ConstraintSpec {
        let mut s = ConstraintSpec::new(0, Direction::LessEq, 5.0, KernelFamily::Gaussian, 1.0);
        s.adaptive_objective = true;
        s
    }

    fn state(specs: &[ConstraintSpec], gamma: f64, delta: f64, beta: f64) -> AdaptationState {
        let cfg = AdaptationConfig {
            gamma,
            delta,
            beta,
            adapt_epsilons: true,
            freeze_after: None,
        };
        AdaptationState::new(specs, &cfg, 100)
    }

    #[test]
    fn objective_ema() {
        let specs = [objective()];
        let mut a = state(&specs, 1.0, 1.0, 1.0);
        a.y_ema[0] = Some(3.0);
        a.update_objectives(&specs, &[20.0]);
        assert_eq!(a.y_ema[0], Some(20.0));

        let mut a = state(&specs, 0.1, 1.0, 1.0);
        a.y_ema[0] = Some(10.0);
        a.ystar[0] = 100.0;
        a.update_objectives(&specs, &[20.0]);
        assert!((a.y_ema[0].unwrap() - 11.0).abs() < 1e-12);
        assert!((a.ystar[0] - 11.0).abs() < 1e-12);
    }

    #[test]
    fn objective_keeps_best() {
        let specs = [objective()];
        let mut a = state(&specs, 1.0, 1.0, 1.0);
        a.update_objectives(&specs, &[4.0]);
        assert_eq!(a.ystar[0], 4.0);
        let mut a = state(&specs, 1.0, 1.0, 1.0);
        a.update_objectives(&specs, &[6.0]);
        assert_eq!(a.ystar[0], 5.0);
    }

    #[test]
    fn maximisation_objective() {
        let mut s = objective();
        s.direction = Direction::GreaterEq;
        let specs = [s];
        let mut a = state(&specs, 1.0, 1.0, 1.0);
        a.update_objectives(&specs, &[6.0]);
        assert_eq!(a.ystar[0], 6.0);
    }

    #[test]
    fn epsilon_update_arithmetic() {
        let specs = [ConstraintSpec {
            epsilon_min: Some(0.1),
            ..ConstraintSpec::new(0, Direction::LessEq, 0.0, KernelFamily::Gaussian, 2.0)
        }];
        let mut a = state(&specs, 1.0, 0.5, 0.5);
        a.update_epsilons(&specs, &[4.0]);
        assert!((a.eps_ema[0] - 3.0).abs() < 1e-12);
        assert!((a.eps[0] - 1.5).abs() < 1e-12);

        a.eps_ema[0] = 0.02;
        a.delta = 1e-9;
        a.update_epsilons(&specs, &[0.0]);
        assert_eq!(a.eps[0], 0.1);
    }

    #[test]
    fn satisfied_constraint_decays_to_floor() {
        let specs = [ConstraintSpec {
            epsilon_min: Some(0.1),
            ..ConstraintSpec::new(0, Direction::LessEq, 0.0, KernelFamily::Gaussian, 2.0)
        }];
        let mut a = state(&specs, 1.0, 0.3, 0.9);
        let mut last = a.eps[0];
        for _ in 0..200 {
            a.update_epsilons(&specs, &[-1.0]);
            assert!(a.eps[0] <= last && a.eps[0] >= 0.1);
            last = a.eps[0];
        }
        assert_eq!(a.eps[0], 0.1);
    }

    #[test]
    fn frozen_after_limit() {
        let specs = [objective()];
        let mut a = state(&specs, 1.0, 1.0, 1.0);
        a.update(&specs, &[1.0], 100);
        assert_eq!(a.ystar[0], 5.0);
        a.update(&specs, &[1.0], 99);
        assert_eq!(a.ystar[0], 1.0);
    }

    #[test]
    fn hard_kernels_keep_epsilon() {
        let specs = [ConstraintSpec::new(
            0,
            Direction::LessEq,
            0.0,
            KernelFamily::Heavyside,
            1.0,
        )];
        let mut a = state(&specs, 1.0, 1.0, 0.5);
        a.update_epsilons(&specs, &[10.0]);
        assert_eq!(a.eps[0], 1.0);
    }
}
