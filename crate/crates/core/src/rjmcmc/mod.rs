//! Reversible-jump Metropolis–Hastings sampling of step rates.
//!
//! The state is a [`StepRate`](crate::StepRate) with `k ≤ k_max`
//! change-points. Four moves change it: a height rescaling, a change-point
//! shift, a birth that splits one interval in two and the matching death.
//! The birth keeps the width-weighted geometric mean of the split heights
//! equal to the old height, so birth and death are exact inverses.

mod chain;
mod moves;
mod prior;

pub use chain::{run_chain, run_chains, run_sampler, ChainConfig, ChainDiagnostics};
pub use moves::{chain_step, Birth, ChainState, Death, JumpTerms, MoveKind, Proposal, Sampler, MIN_SPACING};
pub use prior::{log_prior, move_constant, move_probabilities, HeightRule, MoveProbabilities, Prior, PriorConfig};
