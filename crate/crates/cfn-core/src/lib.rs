//! Cavender–Farris–Neyman (CFN) model on unrooted binary trees.
//!
//! The crate covers the full pipeline used to study the maximum-likelihood
//! landscape of branch parameters: tree ingestion, broadcast simulation,
//! magnetization message passing, closed-form gradient and Hessian of the
//! leaf log-likelihood, exact and Monte Carlo population expectations,
//! landscape diagnostics and MLE fitting.
//!
//! Edge parameters are carried as `θ = 1 − 2p ∈ [−1, 1]` throughout and are
//! indexed by edge id.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod criteria;
pub mod error;
pub mod landscape;
pub mod likelihood;
pub mod linalg;
pub mod magnetization;
pub mod model;
pub mod optimize;
pub mod parallel;
pub mod rng;
pub mod stats;
pub mod tree;

pub use error::{CfnError, Result};
