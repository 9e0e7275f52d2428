//! Lognormal state space models with moment-matched process and observation
//! layers.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. It covers:
//!
//! * [`dist`]: lognormal and half-Cauchy primitives and the moment-matching
//!   transform pair.
//! * [`models`]: the Gompertz / Moran-Ricker benchmark family in biased and
//!   moment-matched form, simulators and joint likelihoods.
//! * [`mcmc`]: Gibbs and Metropolis-within-Gibbs samplers for the benchmark
//!   models.
//! * [`smc`]: bootstrap particle filter and particle marginal
//!   Metropolis-Hastings.
//! * [`scoring`]: CRPS, ignorance, HPD intervals, coverage and paired tests.
//! * [`simstudy`]: the rolling-origin simulation study.
//! * [`dalec`]: the reduced two-pool carbon model used for leaf area index.
//! * [`demo`]: fan-chart data for the lognormal vs. Gaussian random walk toy
//!   systems.
#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod dalec;
pub mod demo;
pub mod dist;
pub mod error;
pub mod mcmc;
pub mod models;
pub mod rng;
pub mod scoring;
pub mod simstudy;
pub mod smc;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
