//! Random covariance clustering: simultaneous clustering of multi-subject
//! multivariate time series and sparse estimation of subject-level and
//! cluster-level precision matrices.
//!
//! The crate is organized bottom-up:
//!
//! * [`solvers`] holds the graphical lasso, covariance graphical lasso and the
//!   Wishart log-density.
//! * [`panel`] turns raw subject matrices into centered (optionally scaled)
//!   panels with cached sample covariances.
//! * [`model`] is the mixture-of-Wisharts EM fit itself.
//! * [`selection`] chooses tuning parameters (stability selection over
//!   subsamples) and the number of clusters (gap statistic).
//! * [`synthetic`] generates hub-network ground truth, runs the two-step
//!   baselines, and scores everything.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod rng;
pub mod solvers;

pub use error::{RccmError, Result};
pub use linalg::{PrecisionMatrix, SymMatrix};
pub mod cluster;
pub mod model;
pub mod network;
pub mod panel;
pub mod selection;
pub mod synthetic;
