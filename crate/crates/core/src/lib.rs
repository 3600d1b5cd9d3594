//! Structure-preserving polynomial approximation on [-1, 1].
//!
//! Coefficients of an approximant are projected onto a convex set cut out by
//! infinitely many halfspaces (positivity, bounds, monotonicity, convexity and
//! similar pointwise constraints on a derivative). The lower-level global
//! optimizations reduce to polynomial root finding.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod basis;
pub mod constraints;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod rootfind;
pub mod solver;

pub use error::{Error, Result};
