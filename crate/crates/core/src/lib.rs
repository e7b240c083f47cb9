//! Sensing matrix design from second-order prior knowledge.
//!
//! Given average signal and clutter covariances, [`design::design_sensing_matrix`]
//! builds an `m x n` measurement matrix under a Frobenius energy budget that
//! minimizes the LMMSE error of the signal estimate. The crate also carries
//! the pieces needed to evaluate such designs: mixture priors and samplers,
//! the Wiener estimator, three baseline designs, and a group-lasso solver over
//! a per-model eigenvector dictionary.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the experiment
//! runner and the command line live in the `priorsense` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod design;
pub mod error;
pub mod linalg;
pub mod lmmse;
pub mod metrics;
pub mod prior;
pub mod recovery;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
