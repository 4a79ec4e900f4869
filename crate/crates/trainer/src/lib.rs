//! Frequency-domain state-sequence prediction as an auxiliary task.
//!
//! - [`nets`]: encoders, the two-headed DTFT predictor and projections, with
//!   online and target copies.
//! - [`freqloss`]: the split raw/projected cosine loss.
//! - [`env`], [`agents`]: small built-in environments and reference agents.
//! - [`train`]: the interleaved auxiliary/agent update loop with target
//!   syncing, evaluation and checkpoints.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agents;
pub mod config;
pub mod env;
mod error;
pub mod freqloss;
pub mod harness;
pub mod nets;
pub mod replay;
pub mod train;

pub use error::{Error, Result};
