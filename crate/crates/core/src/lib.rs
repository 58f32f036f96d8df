//! Phase-shifted neural network ansatz for wideband function approximation
//! and high-frequency Helmholtz problems.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ansatz;
mod error;
pub mod experiment;
pub mod integral;
pub mod nn;
pub mod parallel;
pub mod pde;
pub mod reference;
pub mod targets;

pub use error::{Error, Result};
