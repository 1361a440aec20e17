//! Simulator contract, built-in toy simulators and the subprocess adapter.

mod gaussian;
mod gm_spots;
mod niche;
mod subprocess;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::kernels::StatVector;
use crate::seed;

pub use gaussian::GaussianToy;
pub use gm_spots::{gm_spots, GmSettings, GmSpots, GM_PARAM_NAMES};
pub use niche::{niche_time_to_cells, NicheToy};
pub use subprocess::{FailurePolicy, SubprocessSettings, SubprocessSimulator};

/// A source of draws `y ~ p(y | theta)`.
///
/// Implementations must be deterministic in `(theta, seed)`. `&mut self`
/// lets adapters hold process handles; built-in simulators are stateless.
pub trait Simulator: Send {
    fn output_dim(&self) -> usize;

    fn simulate(&mut self, theta: &[f64], seed: u64) -> Result<StatVector>;

    /// Messages recorded since the last call (timeouts, worker errors).
    fn drain_diagnostics(&mut self) -> Vec<String> {
        Vec::new()
    }
}

impl<T: Simulator + ?Sized> Simulator for Box<T> {
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }

    fn simulate(&mut self, theta: &[f64], seed: u64) -> Result<StatVector> {
        (**self).simulate(theta, seed)
    }

    fn drain_diagnostics(&mut self) -> Vec<String> {
        (**self).drain_diagnostics()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulatorModel {
    /// `y_d = theta_d + sigma * z_d`, one statistic per parameter.
    GaussianToy {
        #[serde(default = "one")]
        sigma: f64,
    },
    /// Time until `target_cells` cells have left a niche whose row
    /// capacities are the parameters.
    NicheToy { target_cells: usize },
    /// 1D Gierer-Meinhardt spot statistics from the 9 reaction parameters.
    GmSpots {
        #[serde(default)]
        settings: GmSettings,
    },
    /// External worker speaking newline-delimited JSON.
    Subprocess(SubprocessSettings),
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSpec {
    pub model: SimulatorModel,
    /// Statistics are the mean of this many independent runs.
    #[serde(default = "one_usize")]
    pub replicates: usize,
}

impl SimulatorSpec {
    pub fn new(model: SimulatorModel) -> Self {
        SimulatorSpec { model, replicates: 1 }
    }

    pub fn with_replicates(mut self, replicates: usize) -> Self {
        self.replicates = replicates;
        self
    }

    /// Statistic count for a simulator fed `param_count` parameters.
    pub fn output_dim(&self, param_count: usize) -> usize {
        match &self.model {
            SimulatorModel::GaussianToy { .. } => param_count,
            SimulatorModel::NicheToy { .. } => 1,
            SimulatorModel::GmSpots { .. } => 4,
            SimulatorModel::Subprocess(s) => s.outputs,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        match &self.model {
            SimulatorModel::GaussianToy { sigma } => *sigma != 0.0,
            SimulatorModel::NicheToy { .. } => true,
            SimulatorModel::GmSpots { .. } => false,
            SimulatorModel::Subprocess(s) => s.stochastic,
        }
    }

    pub fn validate(&self, param_count: usize) -> Result<()> {
        if self.replicates == 0 {
            return Err(config_err("simulator.replicates must be at least 1"));
        }
        match &self.model {
            SimulatorModel::GaussianToy { sigma } if !(*sigma >= 0.0 && sigma.is_finite()) => {
                Err(config_err("gaussian_toy sigma must be finite and non-negative"))
            }
            SimulatorModel::NicheToy { target_cells: 0 } => Err(config_err("niche_toy target_cells must be positive")),
            SimulatorModel::GmSpots { settings } => {
                if param_count != GM_PARAM_NAMES.len() {
                    return Err(config_err(format!(
                        "gm_spots takes {} parameters, prior declares {param_count}",
                        GM_PARAM_NAMES.len()
                    )));
                }
                settings.validate()
            }
            SimulatorModel::Subprocess(s) => s.validate(),
            _ => Ok(()),
        }
    }

    /// A fresh simulator instance. Each chain owns its own instance.
    pub fn build(&self, param_count: usize) -> Result<Box<dyn Simulator>> {
        self.validate(param_count)?;
        let inner: Box<dyn Simulator> = match &self.model {
            SimulatorModel::GaussianToy { sigma } => Box::new(GaussianToy::new(*sigma, param_count)),
            SimulatorModel::NicheToy { target_cells } => Box::new(NicheToy::new(*target_cells)),
            SimulatorModel::GmSpots { settings } => Box::new(GmSpots::new(settings.clone())),
            SimulatorModel::Subprocess(s) => Box::new(SubprocessSimulator::new(s.clone())),
        };
        Ok(if self.replicates > 1 {
            Box::new(Averaged::new(inner, self.replicates))
        } else {
            inner
        })
    }
}

/// Averages `replicates` independent runs into one statistic vector.
/// Replicate `m` uses seed `derive(seed, m)`; any degenerate replicate makes
/// the average degenerate.
pub struct Averaged<S> {
    inner: S,
    replicates: usize,
}

impl<S: Simulator> Averaged<S> {
    pub fn new(inner: S, replicates: usize) -> Self {
        assert!(replicates >= 1);
        Averaged { inner, replicates }
    }
}

impl<S: Simulator> Simulator for Averaged<S> {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn simulate(&mut self, theta: &[f64], seed: u64) -> Result<StatVector> {
        let j = self.inner.output_dim();
        let mut sum = vec![0.0; j];
        for m in 0..self.replicates {
            let y = self.inner.simulate(theta, seed::derive(&[seed, m as u64]))?;
            if y.degenerate {
                return Ok(StatVector::degenerate(j));
            }
            for (acc, v) in sum.iter_mut().zip(&y.values) {
                *acc += v;
            }
        }
        let n = self.replicates as f64;
        Ok(StatVector::new(sum.into_iter().map(|s| s / n).collect()))
    }

    fn drain_diagnostics(&mut self) -> Vec<String> {
        self.inner.drain_diagnostics()
    }
}

/// `count` independent draws at `theta`; draw `s` uses `derive(seed, s)`.
pub fn simulate_batch<S: Simulator + ?Sized>(
    sim: &mut S,
    theta: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<StatVector>> {
    (0..count)
        .map(|s| sim.simulate(theta, seed::derive(&[seed, s as u64])))
        .collect()
}

/// Flag non-finite outputs as degenerate.
pub(crate) fn finite_or_degenerate(values: Vec<f64>) -> StatVector {
    if values.iter().all(|v| v.is_finite()) {
        StatVector::new(values)
    } else {
        StatVector::degenerate(values.len())
    }
}
