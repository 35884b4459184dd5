//! Numerical laboratory for the drift Laplacian `ℒ = Δ - ∇_{∇f}` along the
//! modified Ricci flow on flat weighted products of circles and Gaussian
//! lines.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod spectral;
pub mod comparison;
pub mod flow;
pub mod oracle;
pub mod splitting;

pub use error::{Error, Result};
