//! Tabular KL-regularized preference learning under local label
//! differential privacy.
//!
//! Rewards, policies and function classes are dense state-by-action tables.
//! Labels reach the learners only after randomized response, and every
//! objective, suboptimality and regret is computed exactly rather than
//! estimated. [`offline`] holds the pessimistic learner, [`online`] the
//! optimistic one, and [`instances`] the generators (including the binary
//! lower-bound family).

// Comparisons like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod instance;
pub mod instances;
pub mod model;
pub mod offline;
pub mod online;
pub mod privacy;
pub mod rng;
pub mod sample;
pub mod table;

pub use error::{Error, Result};
