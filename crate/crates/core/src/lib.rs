//! Gossip mixing matrices, gradient tracking, and the numerical checks around them.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs: matrix builders, a symmetric eigensolver, the lifted
//! iteration matrices used in the contraction analysis, the stochastic gradient
//! oracles of the noise-floor experiments, the gradient tracking and D-SGD step
//! functions, and the metrics and sweep bookkeeping built on top of them.
//!
//! File formats, the command line, and parallel execution live in the `gtsim`
//! companion crate.

#![no_std]
// `!(x <= y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod math;

pub mod algorithms;
pub mod contraction;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod mixing;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
pub use graph::Graph;
pub use linalg::Matrix;
pub use mixing::{MixingMatrix, SpectralParams};
