//! Spot statistics from a 1D saturated Gierer-Meinhardt system.
//!
//! Activator `W` (Wnt) and inhibitor `I` on a periodic grid:
//!
//! ```text
//! dW/dt = D_W W_xx + N k_W W^2 / ((1 + a W^2) b I) - mu_W W + S_W
//! dI/dt = D_I I_xx + k_I W^2 - mu_I I
//! ```
//!
//! integrated with forward Euler from a perturbed homogeneous steady state.
//! `D_I` is `inhibitor_diffusion_ratio * D_W`. The final `W` profile is
//! thresholded at `mean + 0.5 std`; contiguous super-threshold segments are
//! spots.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Simulator;
use crate::error::{config_err, Result};
use crate::kernels::StatVector;
use crate::seed;

/// Parameter order expected by [`gm_spots`].
pub const GM_PARAM_NAMES: [&str; 9] = [
    "kappa_w", "kappa_wi", "mu_w", "mu_wi", "a", "b", "s_w", "d_w", "nutrient",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmSettings {
    pub inhibitor_diffusion_ratio: f64,
    pub domain_length: f64,
    pub grid_cells: usize,
    pub final_time: f64,
    /// Runs needing more Euler steps than this are reported degenerate.
    pub max_steps: usize,
    /// Relative amplitude of the initial perturbation.
    pub perturbation: f64,
    pub perturbation_seed: u64,
    /// Spot threshold is `mean + threshold_std * std`.
    pub threshold_std: f64,
    /// Profiles with `(max - min) <= flat_tolerance * max` have no spots.
    pub flat_tolerance: f64,
}

impl Default for GmSettings {
    fn default() -> Self {
        GmSettings {
            inhibitor_diffusion_ratio: 50.0,
            domain_length: 3.5,
            grid_cells: 100,
            final_time: 20.0,
            max_steps: 2_000_000,
            perturbation: 0.01,
            perturbation_seed: 0,
            threshold_std: 0.5,
            flat_tolerance: 1e-3,
        }
    }
}

impl GmSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("inhibitor_diffusion_ratio", self.inhibitor_diffusion_ratio),
            ("domain_length", self.domain_length),
            ("final_time", self.final_time),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("gm_spots {name} must be positive")));
            }
        }
        if self.grid_cells < 3 {
            return Err(config_err("gm_spots grid_cells must be at least 3"));
        }
        Ok(())
    }

    fn dx(&self) -> f64 {
        self.domain_length / self.grid_cells as f64
    }
}

#[derive(Debug, Clone)]
pub struct GmSpots {
    settings: GmSettings,
    diagnostics: Vec<String>,
}

impl GmSpots {
    pub fn new(settings: GmSettings) -> Self {
        GmSpots {
            settings,
            diagnostics: Vec::new(),
        }
    }
}

impl Simulator for GmSpots {
    fn output_dim(&self) -> usize {
        4
    }

    /// Deterministic: `seed` is ignored.
    fn simulate(&mut self, theta: &[f64], _seed: u64) -> Result<StatVector> {
        match gm_spots(theta, &self.settings) {
            Ok(y) => Ok(y),
            Err(GmFailure::Config(msg)) => Err(config_err(msg)),
            Err(failure) => {
                self.diagnostics.push(failure.to_string());
                Ok(StatVector::degenerate(4))
            }
        }
    }

    fn drain_diagnostics(&mut self) -> Vec<String> {
        std::mem::take(&mut self.diagnostics)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GmFailure {
    Config(String),
    OutOfBounds(&'static str),
    StepBudget(usize),
    BlowUp(f64),
}

impl std::fmt::Display for GmFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GmFailure::Config(m) => write!(f, "{m}"),
            GmFailure::OutOfBounds(p) => write!(f, "parameter {p} outside its admissible range"),
            GmFailure::StepBudget(n) => write!(f, "integration needs {n} steps, over budget"),
            GmFailure::BlowUp(t) => write!(f, "non-finite field at t = {t}"),
        }
    }
}

struct Params {
    kappa_w: f64,
    kappa_i: f64,
    mu_w: f64,
    mu_i: f64,
    a: f64,
    b: f64,
    s_w: f64,
    d_w: f64,
    nutrient: f64,
}

impl Params {
    fn from_slice(theta: &[f64]) -> Result<Self, GmFailure> {
        if theta.len() != GM_PARAM_NAMES.len() {
            return Err(GmFailure::Config(format!(
                "gm_spots expects 9 parameters, got {}",
                theta.len()
            )));
        }
        let p = Params {
            kappa_w: theta[0],
            kappa_i: theta[1],
            mu_w: theta[2],
            mu_i: theta[3],
            a: theta[4],
            b: theta[5],
            s_w: theta[6],
            d_w: theta[7],
            nutrient: theta[8],
        };
        let checks = [
            (p.kappa_w > 0.0, "kappa_w"),
            (p.kappa_i > 0.0, "kappa_wi"),
            (p.mu_w >= 0.0, "mu_w"),
            (p.mu_i >= 0.0, "mu_wi"),
            (p.a >= 0.0, "a"),
            (p.b > 0.0, "b"),
            (p.s_w >= 0.0, "s_w"),
            (p.d_w > 0.0 && p.d_w <= 1.0, "d_w"),
            (p.nutrient > 0.0 && p.nutrient <= 1.0, "nutrient"),
        ];
        for (ok, name) in checks {
            if !ok {
                return Err(GmFailure::OutOfBounds(name));
            }
        }
        Ok(p)
    }

    /// Positive root of the spatially uniform steady state, if one exists.
    fn homogeneous_state(&self) -> Option<(f64, f64)> {
        if self.mu_w <= 0.0 || self.mu_i <= 0.0 {
            return None;
        }
        // With I = k_I W^2 / mu_I the activator balance reduces to
        // c / (1 + a W^2) - mu_W W + S_W = 0, decreasing in W.
        let c = self.nutrient * self.kappa_w * self.mu_i / (self.b * self.kappa_i);
        let h = |w: f64| c / (1.0 + self.a * w * w) - self.mu_w * w + self.s_w;
        let (mut lo, mut hi) = (0.0, (c + self.s_w) / self.mu_w);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let w = 0.5 * (lo + hi);
        (w > 0.0).then(|| (w, self.kappa_i * w * w / self.mu_i))
    }
}

/// Integrate the system for `theta` (ordered as [`GM_PARAM_NAMES`]) and
/// return `[spot width, spot count, background, mean W]`.
pub fn gm_spots(theta: &[f64], settings: &GmSettings) -> Result<StatVector, GmFailure> {
    let p = Params::from_slice(theta)?;
    let w = integrate(&p, settings)?;
    Ok(spot_statistics(&w, settings))
}

fn integrate(p: &Params, s: &GmSettings) -> Result<Vec<f64>, GmFailure> {
    let n = s.grid_cells;
    let dx = s.dx();
    let d_w = p.d_w;
    let d_i = s.inhibitor_diffusion_ratio * p.d_w;
    let dt = (0.9 * dx * dx / (2.0 * d_w.max(d_i))).min(0.01);
    let steps = (s.final_time / dt).ceil() as usize;
    if steps > s.max_steps {
        return Err(GmFailure::StepBudget(steps));
    }
    let dt = s.final_time / steps as f64;

    let (w0, i0) = p.homogeneous_state().unwrap_or((1.0, 1.0));
    let mut rng = seed::rng_from(s.perturbation_seed);
    let mut w: Vec<f64> = (0..n)
        .map(|_| w0 * (1.0 + s.perturbation * rng.random_range(-1.0..1.0)))
        .collect();
    let mut inh = vec![i0; n];
    let mut w_next = vec![0.0; n];
    let mut inh_next = vec![0.0; n];

    let inv_dx2 = 1.0 / (dx * dx);
    let gain = p.nutrient * p.kappa_w / p.b;
    for step in 0..steps {
        for k in 0..n {
            let left = if k == 0 { n - 1 } else { k - 1 };
            let right = if k + 1 == n { 0 } else { k + 1 };
            let wk = w[k];
            let ik = inh[k];
            let lap_w = (w[left] - 2.0 * wk + w[right]) * inv_dx2;
            let lap_i = (inh[left] - 2.0 * ik + inh[right]) * inv_dx2;
            let w2 = wk * wk;
            let production = gain * w2 / ((1.0 + p.a * w2) * ik);
            w_next[k] = wk + dt * (d_w * lap_w + production - p.mu_w * wk + p.s_w);
            inh_next[k] = ik + dt * (d_i * lap_i + p.kappa_i * w2 - p.mu_i * ik);
        }
        std::mem::swap(&mut w, &mut w_next);
        std::mem::swap(&mut inh, &mut inh_next);
        if (step % 256 == 0 || step + 1 == steps) && w.iter().chain(&inh).any(|v| !v.is_finite()) {
            return Err(GmFailure::BlowUp(step as f64 * dt));
        }
    }
    Ok(w)
}

/// Spot statistics of a periodic profile; degenerate when no spot is found.
pub fn spot_statistics(w: &[f64], s: &GmSettings) -> StatVector {
    let n = w.len();
    if n == 0 || w.iter().any(|v| !v.is_finite()) {
        return StatVector::degenerate(4);
    }
    let nf = n as f64;
    let mean = w.iter().sum::<f64>() / nf;
    let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || max - min <= s.flat_tolerance * max.abs() {
        return StatVector::degenerate(4);
    }
    let threshold = mean + s.threshold_std * std;
    let above: Vec<bool> = w.iter().map(|&v| v > threshold).collect();
    // Start scanning just after a sub-threshold cell so a segment crossing
    // the periodic boundary is counted once.
    let Some(start) = above.iter().position(|&a| !a) else {
        return StatVector::degenerate(4);
    };
    let mut segments = Vec::new();
    let mut run = 0usize;
    for k in 1..=n {
        if above[(start + k) % n] {
            run += 1;
        } else if run > 0 {
            segments.push(run);
            run = 0;
        }
    }
    if segments.is_empty() {
        return StatVector::degenerate(4);
    }
    let dx = s.domain_length / nf;
    let width = segments.iter().sum::<usize>() as f64 / segments.len() as f64 * dx;
    let below: Vec<f64> = w.iter().zip(&above).filter(|(_, &a)| !a).map(|(&v, _)| v).collect();
    let background = (below.iter().sum::<f64>() / below.len() as f64 / max).clamp(0.0, 1.0);
    StatVector::new(vec![width, segments.len() as f64, background, mean])
}
