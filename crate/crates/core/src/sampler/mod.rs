//! ABC-MCMC with one-sided likelihoods.
//!
//! Each step proposes a move, draws `S` simulations at the proposal and
//! compares `prior * likelihood` estimates. In pseudo-marginal mode the
//! current state's draws and likelihood are cached until the next accepted
//! move; in marginal mode they are redrawn every step.

mod adapt;
mod prior;
mod proposal;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adapt::{AdaptationConfig, AdaptationState};
pub use prior::{BaseDensity, Functional, IncrementLimits, IncrementTransform, ParamPrior, PriorSpec, SoftFactor};
pub use proposal::{log_q_correction, propose};

use crate::error::{config_err, PopeError, Result};
use crate::kernels::{check_dims, log_kernel_at, ConstraintSpec, StatVector};
use crate::response_models::{LikelihoodMode, ResponseModel, DEFAULT_VARIANCE_FLOOR};
use crate::seed;
use crate::simulators::{simulate_batch, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    Marginal,
    PseudoMarginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Chain length `T`.
    pub iterations: usize,
    /// Simulator draws per likelihood estimate `S`.
    #[serde(default = "one")]
    pub draws: usize,
    pub mode: SamplerMode,
    pub likelihood: LikelihoodMode,
    #[serde(default = "default_variance_floor")]
    pub variance_floor: f64,
    /// Random-walk scale per sampled parameter.
    pub step_sizes: Vec<f64>,
    /// Per-parameter opt-in to multiplicative (log-space) moves.
    #[serde(default)]
    pub log_walk: Vec<bool>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default)]
    pub burnin: usize,
    #[serde(default = "default_init_tries")]
    pub init_max_tries: usize,
}

fn one() -> usize {
    1
}

fn default_variance_floor() -> f64 {
    DEFAULT_VARIANCE_FLOOR
}

fn default_init_tries() -> usize {
    10_000
}

impl RunConfig {
    pub fn new(iterations: usize, mode: SamplerMode, likelihood: LikelihoodMode, step_sizes: Vec<f64>) -> Self {
        RunConfig {
            iterations,
            draws: 1,
            mode,
            likelihood,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            step_sizes,
            log_walk: Vec::new(),
            master_seed: 0,
            chains: 1,
            burnin: 0,
            init_max_tries: default_init_tries(),
        }
    }

    pub fn response_model(&self) -> ResponseModel {
        ResponseModel {
            mode: self.likelihood,
            variance_floor: self.variance_floor,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.iterations <= self.burnin {
            return Err(config_err(format!(
                "iterations ({}) must exceed burnin ({})",
                self.iterations, self.burnin
            )));
        }
        let min_draws = self.response_model().min_draws();
        if self.draws < min_draws {
            return Err(config_err(format!(
                "{:?} likelihood needs draws >= {min_draws}",
                self.likelihood
            )));
        }
        if self.step_sizes.len() != dim {
            return Err(config_err(format!(
                "step_sizes has {} entries for {dim} parameters",
                self.step_sizes.len()
            )));
        }
        if self.step_sizes.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(config_err("step sizes must be finite and non-negative"));
        }
        if !self.log_walk.is_empty() && self.log_walk.len() != dim {
            return Err(config_err(format!(
                "log_walk has {} entries for {dim} parameters",
                self.log_walk.len()
            )));
        }
        if self.chains == 0 || self.init_max_tries == 0 {
            return Err(config_err("chains and init_max_tries must be positive"));
        }
        Ok(())
    }
}

/// The Markov chain's state. `theta` lives in sampled space.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub sim_theta: Vec<f64>,
    pub draws: Vec<StatVector>,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub step: usize,
}

/// One collected MH step. `epsilon` and `ystar` are indexed by statistic;
/// unconstrained statistics hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub accepted: bool,
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub theta: Vec<f64>,
    pub ybar: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub ystar: Vec<f64>,
}

/// A chain that stopped early, with everything recorded before the failure.
#[derive(Debug)]
pub struct ChainFailure {
    /// `None` when initialisation failed.
    pub step: Option<usize>,
    pub error: PopeError,
    pub partial: Vec<TraceRecord>,
}

const STREAM_MH: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_STEP: u64 = 2;

/// Log acceptance probability. A `-inf` numerator always rejects; a `-inf`
/// denominator with a finite numerator always accepts, so chains started in
/// a zero-likelihood region can escape.
pub fn log_acceptance(numerator: f64, denominator: f64) -> f64 {
    if numerator == f64::NEG_INFINITY || numerator.is_nan() {
        f64::NEG_INFINITY
    } else if denominator == f64::NEG_INFINITY {
        0.0
    } else {
        (numerator - denominator).min(0.0)
    }
}

/// Everything a chain needs besides its simulator.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub run: RunConfig,
    pub prior: PriorSpec,
    pub constraints: Vec<ConstraintSpec>,
    pub adaptation: AdaptationConfig,
    pub stat_count: usize,
}

impl Sampler {
    pub fn new(
        run: RunConfig,
        mut prior: PriorSpec,
        constraints: Vec<ConstraintSpec>,
        adaptation: AdaptationConfig,
        stat_count: usize,
    ) -> Result<Self> {
        prior.materialize();
        prior.validate()?;
        run.validate(prior.dim())?;
        adaptation.validate()?;
        for c in &constraints {
            c.validate()?;
        }
        check_dims(stat_count, &constraints, None, None)?;
        run.response_model().validate(&constraints)?;
        for (d, lw) in run.log_walk.iter().enumerate() {
            if *lw && !(prior.params[d].lower_bound() >= 0.0) {
                return Err(config_err(format!(
                    "log_walk on `{}` needs a non-negative lower bound",
                    prior.params[d].name
                )));
            }
        }
        Ok(Sampler {
            run,
            prior,
            constraints,
            adaptation,
            stat_count,
        })
    }

    pub fn freeze_after(&self) -> usize {
        self.adaptation.freeze_after.unwrap_or(self.run.burnin)
    }

    pub fn initial_adaptation(&self) -> AdaptationState {
        AdaptationState::new(&self.constraints, &self.adaptation, self.freeze_after())
    }

    pub fn chain_seed(&self, chain_index: usize) -> u64 {
        seed::derive(&[self.run.master_seed, chain_index as u64])
    }

    pub fn chain_rng(&self, chain_index: usize) -> ChaCha8Rng {
        seed::rng_from(seed::derive(&[self.chain_seed(chain_index), STREAM_MH]))
    }

    fn log_likelihood(&self, draws: &[StatVector], adapt: &AdaptationState) -> Result<f64> {
        self.run
            .response_model()
            .log_likelihood(draws, &self.constraints, &adapt.ystar, &adapt.eps)
    }

    /// Draw starting points from the base densities until one has a
    /// non-zero prior and likelihood.
    pub fn rejection_initialize<S: Simulator + ?Sized>(
        &self,
        sim: &mut S,
        adapt: &AdaptationState,
        chain_index: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ChainState> {
        let base = seed::derive(&[self.chain_seed(chain_index), STREAM_INIT]);
        let max_tries = self.run.init_max_tries;
        let mut detail = String::from("no attempt had a finite prior");
        for attempt in 0..max_tries {
            let theta = self.prior.sample_base(rng);
            let log_prior = self.prior.log_prior(&theta);
            if log_prior == f64::NEG_INFINITY {
                continue;
            }
            let sim_theta = self.prior.to_simulator(&theta);
            let draws = simulate_batch(sim, &sim_theta, self.run.draws, seed::derive(&[base, attempt as u64]))?;
            let log_likelihood = self.log_likelihood(&draws, adapt)?;
            if log_likelihood > f64::NEG_INFINITY {
                log::debug!("chain {chain_index}: initialised after {} tries", attempt + 1);
                return Ok(ChainState {
                    theta,
                    sim_theta,
                    draws,
                    log_likelihood,
                    log_prior,
                    step: 0,
                });
            }
            detail = self.describe_failure(&draws, adapt);
        }
        Err(PopeError::Initialization {
            tries: max_tries,
            detail,
        })
    }

    fn describe_failure(&self, draws: &[StatVector], adapt: &AdaptationState) -> String {
        if draws.iter().any(|y| y.degenerate) {
            return "last attempt produced a degenerate simulation".into();
        }
        let failing: Vec<String> = self
            .constraints
            .iter()
            .enumerate()
            .filter(|(k, c)| {
                draws
                    .iter()
                    .all(|y| log_kernel_at(y.values[c.stat], c, adapt.ystar[*k], adapt.eps[*k]) == f64::NEG_INFINITY)
            })
            .map(|(k, c)| format!("stat {} {:?} {}", c.stat, c.direction, adapt.ystar[k]))
            .collect();
        if failing.is_empty() {
            "last attempt had zero likelihood".into()
        } else {
            format!("last attempt violated: {}", failing.join(", "))
        }
    }

    /// One Metropolis-Hastings step followed by adaptation.
    pub fn mh_step<S: Simulator + ?Sized>(
        &self,
        state: &mut ChainState,
        adapt: &mut AdaptationState,
        sim: &mut S,
        chain_index: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<TraceRecord> {
        let t = state.step;
        let step_seed = seed::derive(&[self.chain_seed(chain_index), STREAM_STEP, t as u64]);
        let (proposal, log_q) = propose(&state.theta, &self.run.step_sizes, &self.run.log_walk, rng);
        let u: f64 = rng.random();
        let proposal_prior = self.prior.log_prior(&proposal);

        let mut accepted = false;
        if proposal_prior > f64::NEG_INFINITY {
            let proposal_sim = self.prior.to_simulator(&proposal);
            let draws = simulate_batch(sim, &proposal_sim, self.run.draws, seed::derive(&[step_seed, 0]))?;
            let proposal_ll = self.log_likelihood(&draws, adapt)?;
            if self.run.mode == SamplerMode::Marginal {
                state.draws = simulate_batch(sim, &state.sim_theta, self.run.draws, seed::derive(&[step_seed, 1]))?;
                state.log_likelihood = self.log_likelihood(&state.draws, adapt)?;
            }
            let log_alpha = log_acceptance(
                proposal_prior + proposal_ll + log_q,
                state.log_prior + state.log_likelihood,
            );
            if u < log_alpha.exp() {
                accepted = true;
                state.theta = proposal;
                state.sim_theta = proposal_sim;
                state.draws = draws;
                state.log_likelihood = proposal_ll;
                state.log_prior = proposal_prior;
            }
        }
        for msg in sim.drain_diagnostics() {
            log::debug!("chain {chain_index} step {t}: {msg}");
        }

        let ybar = mean_statistics(&state.draws, self.stat_count);
        adapt.update(&self.constraints, &ybar, t);
        let record = TraceRecord {
            step: t,
            accepted,
            log_likelihood: state.log_likelihood,
            log_prior: state.log_prior,
            theta: state.sim_theta.clone(),
            ybar,
            epsilon: self.per_stat(&adapt.eps),
            ystar: self.per_stat(&adapt.ystar),
        };
        state.step += 1;
        Ok(record)
    }

    fn per_stat(&self, per_constraint: &[f64]) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.stat_count];
        for (c, v) in self.constraints.iter().zip(per_constraint) {
            out[c.stat] = *v;
        }
        out
    }

    /// Initialise and run chain `chain_index` for `iterations` steps.
    /// Deterministic given `(master_seed, chain_index)`.
    pub fn run_chain<S: Simulator + ?Sized>(
        &self,
        sim: &mut S,
        chain_index: usize,
    ) -> Result<Vec<TraceRecord>, ChainFailure> {
        let mut rng = self.chain_rng(chain_index);
        let mut adapt = self.initial_adaptation();
        let mut state = self
            .rejection_initialize(sim, &adapt, chain_index, &mut rng)
            .map_err(|error| ChainFailure {
                step: None,
                error,
                partial: Vec::new(),
            })?;
        let mut trace = Vec::with_capacity(self.run.iterations);
        for t in 0..self.run.iterations {
            match self.mh_step(&mut state, &mut adapt, sim, chain_index, &mut rng) {
                Ok(record) => trace.push(record),
                Err(error) => {
                    return Err(ChainFailure {
                        step: Some(t),
                        error,
                        partial: trace,
                    })
                }
            }
        }
        Ok(trace)
    }
}

/// Per-statistic mean of the draws; NaN when any draw is degenerate.
pub fn mean_statistics(draws: &[StatVector], stat_count: usize) -> Vec<f64> {
    if draws.is_empty() || draws.iter().any(|y| y.degenerate) {
        return vec![f64::NAN; stat_count];
    }
    let n = draws.len() as f64;
    (0..stat_count)
        .map(|j| draws.iter().map(|y| y.values[j]).sum::<f64>() / n)
        .collect()
}
