//! Multiple change-point detection for the rate of threshold-exceedance
//! events.
//!
//! Event occurrences are modelled as a non-homogeneous Poisson process whose
//! rate is a step function of time. The number, positions and heights of the
//! steps are sampled with a reversible-jump Metropolis–Hastings chain.
//! Around the sampler sit the preprocessing stages that turn a raw daily
//! series into declustered exceedances, classical and Bayesian tests for
//! comparing constant, log-linear and one-change-point rates, posterior
//! summaries, and posterior-predictive validation.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod event_model;
pub mod model_select;
pub mod posterior;
pub mod preprocess;
pub mod quadrature;
pub mod rjmcmc;
pub mod special;
pub mod validation;

pub use error::{Error, Result};
pub use event_model::{
    cumulative_rate, log_likelihood, simulate_conditional, simulate_direct, simulate_thinning, time_rescale,
    CountingPath, ExceedanceSeries, StepRate,
};
