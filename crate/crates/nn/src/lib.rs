//! Reverse-mode autodiff over dense row-major matrices, sized for the small
//! networks of a desk-scale auxiliary-task learner.
//!
//! A [`Tape`] records operations on values pulled from one or more
//! [`ParamTree`]s; [`Tape::backward`] returns gradients keyed by parameter
//! name. Values that should not receive gradient are cut with
//! [`Tape::detach`] or entered as constants.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
mod error;
pub mod layers;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use layers::{Activation, LayerSpec};
pub use tape::{Grads, Tape, Var};
pub use tensor::{ParamTree, Tensor};
