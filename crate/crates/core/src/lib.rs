//! Supervised quantile normalization.
//!
//! Quantile normalization replaces each sample's values by a shared target
//! quantile, keeping only the ranks. This crate learns that target jointly
//! with a linear classifier, using the fact that a normalized sample is a
//! permutation of the target.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod io;
pub mod isotonic;
pub mod linmod;
mod optim;
pub mod perm;
pub mod quantiles;
pub mod suquan;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use quantiles::{QuantileFamily, TargetQuantile};
