//! De-biased scaled group Lasso inference for groups of regression
//! coefficients in high-dimensional linear models.
//!
//! The pipeline has three steps:
//!
//! 1. [`scaled::fit_scaled`] estimates the coefficients and the noise level
//!    jointly with the scaled group Lasso.
//! 2. [`projection::relaxed_projection`] builds a score matrix for the group
//!    of interest by penalized multivariate regression of its columns on the
//!    remaining groups, and reports the feasibility diagnostics of the
//!    resulting projection.
//! 3. [`inference::group_test`] de-biases the initial estimate and performs a
//!    chi-squared test, with a confidence ellipsoid for the group.
//!
//! [`simulation`] reproduces the Monte-Carlo studies and [`diagnostics`]
//! estimates cone-restricted design constants.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod group_lasso;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod projection;
pub mod scaled;
pub mod simulation;

pub use error::{Error, Result};
