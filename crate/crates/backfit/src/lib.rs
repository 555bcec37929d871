//! Sparse additive regression by penalized local-linear smooth backfitting,
//! plus two-stage transfer across related samples.
//!
//! The model is `Y = f_1(X_1) + ... + f_d(X_d) + noise` with covariates on
//! [0, 1]. Components are estimated on a grid by backfitting local-linear
//! smoothers under a group sparsity penalty that zeroes out irrelevant
//! covariates. When additional samples from related populations are
//! available, a pooled fit followed by a target-only debiasing step recovers
//! the target function at the pooled accuracy, and a sample-splitting
//! screen decides which candidate samples are close enough to pool.

pub mod artifact;
pub mod curve;
pub mod design;
pub mod detect;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod sample;
pub mod sbf;
pub mod screen;
pub mod select;
pub mod sim;
pub mod stream;
pub mod transfer;

pub use error::{Error, ErrorClass, Result};
