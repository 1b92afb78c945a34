//! Experiment harness: configuration, seeded sweeps, scaling-law fits,
//! CSV output and the invariant suite behind the `ldprlhf` binary.

// Comparisons like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod invariants;
pub mod output;
pub mod sweep;

pub use config::{Mode, SweepConfig};
pub use error::{ConfigError, HarnessError};
