use rand_distr::{Distribution, StandardNormal};

use super::{finite_or_degenerate, Simulator};
use crate::error::{config_err, Result};
use crate::kernels::StatVector;
use crate::seed;

/// `y = theta + sigma * z`, `z ~ N(0, I)`. With `sigma = 0` it is the
/// identity map.
#[derive(Debug, Clone)]
pub struct GaussianToy {
    sigma: f64,
    dim: usize,
}

impl GaussianToy {
    pub fn new(sigma: f64, dim: usize) -> Self {
        GaussianToy { sigma, dim }
    }
}

impl Simulator for GaussianToy {
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn simulate(&mut self, theta: &[f64], seed: u64) -> Result<StatVector> {
        if theta.len() != self.dim {
            return Err(config_err(format!(
                "gaussian_toy expects {} parameters, got {}",
                self.dim,
                theta.len()
            )));
        }
        if self.sigma == 0.0 {
            return Ok(finite_or_degenerate(theta.to_vec()));
        }
        let mut rng = seed::rng_from(seed);
        let y = theta
            .iter()
            .map(|t| {
                let z: f64 = StandardNormal.sample(&mut rng);
                t + self.sigma * z
            })
            .collect();
        Ok(finite_or_degenerate(y))
    }
}
