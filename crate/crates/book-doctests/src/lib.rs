//! The guide's chapters as modules, so `cargo test --doc` runs every listing.
//!
//! One module per chapter keeps failures traceable to their source file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/event-model.md")]
pub mod event_model {}
#[doc = include_str!("../../../book/src/preprocessing.md")]
pub mod preprocessing {}
#[doc = include_str!("../../../book/src/sampler.md")]
pub mod sampler {}
#[doc = include_str!("../../../book/src/posterior.md")]
pub mod posterior {}
#[doc = include_str!("../../../book/src/model-selection.md")]
pub mod model_selection {}
#[doc = include_str!("../../../book/src/validation.md")]
pub mod validation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
