//! Likelihood-free posterior sampling over simulator parameters conditioned
//! on one-sided constraints and adaptive objectives.
//!
//! A [`simulators::Simulator`] maps parameters to summary statistics, a
//! [`response_models::ResponseModel`] turns simulator draws into a
//! likelihood under [`kernels::ConstraintSpec`]s, and a
//! [`sampler::Sampler`] runs ABC-MCMC chains over a
//! [`sampler::PriorSpec`]. [`analysis`] summarises the resulting traces and
//! [`config`] wires everything to JSON configs and the command line.

// `!(x > y)` is used deliberately so NaN takes the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod kernels;
pub mod normal;
pub mod response_models;
pub mod sampler;
pub mod seed;
pub mod simulators;

pub use error::{PopeError, Result};
pub use kernels::{ConstraintSpec, Direction, KernelFamily, StatVector};
