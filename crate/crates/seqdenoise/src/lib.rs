//! Denoising generation over sets of variables that carry individual noise
//! levels, rather than one shared level. Individual levels let inference
//! decide *when* each variable is resolved: all at once (parallel), strictly
//! one after another (sequential), or anything in between via overlapping
//! decrement windows. The crate bundles:
//!
//! - noise schedules and the generalized forward/reverse process ([`schedule`],
//!   [`process`])
//! - training-time level samplers and inverse-density loss weights
//!   ([`tsampler`])
//! - sequentialization plans and variable-order policies ([`policy`])
//! - an exact posterior denoiser over a finite corpus and a small trainable
//!   network denoiser ([`denoiser`])
//! - symbolic Sudoku and Even Pixels benchmarks ([`bench`])

pub mod bench;
pub mod denoiser;
pub mod error;
pub mod policy;
pub mod process;
pub mod schedule;
pub mod stats;
pub mod tsampler;
pub mod types;

pub use error::{Error, Result};
pub use schedule::NoiseSchedule;
pub use types::{NoiseLevelVector, VariableSet};
