//! Spectral learning curves for kernel ridge(less) regression on inverse
//! problems over the periodic unit interval.

// `!(x <= tol)` style comparisons deliberately treat NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod fourier_basis;
pub mod harness;
pub mod risk;
pub mod rng;
pub mod spectral_problem;
pub mod theory;

pub use error::{Error, Result};
