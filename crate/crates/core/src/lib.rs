//! Exact tabular machinery for state-sequence prediction in the frequency
//! domain.
//!
//! The crate is organized bottom-up:
//!
//! - [`mdp`]: finite MDPs with state-only rewards and vector state embeddings,
//!   policies, induced Markov chains, discounted state distributions and
//!   policy performance.
//! - [`spectral`]: recurrent-class decomposition, graph periods, modulus-one
//!   eigenvalue counting and the asymptotic period of `Pⁿμ₀`.
//! - [`dtft`]: the sampled DTFT of discounted state sequences, the Bellman-style
//!   operator on DTFT fields, its fixed point and inverse-DTFT state recovery.
//! - [`bounds`]: numeric checks of the time-domain and frequency-domain
//!   performance-difference bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod complex;
pub mod config;
pub mod dtft;
pub mod eigen;
mod error;
pub mod linalg;
pub mod mdp;
pub mod rng;
pub mod spectral;

pub use complex::C64;
pub use error::{Error, Result};
pub use linalg::Mat;
pub use mdp::{TabularMdp, TabularPolicy, Trajectory};
