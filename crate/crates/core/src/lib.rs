#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical toolkit for reflected small-noise diffusions in convex domains:
//! projection Euler integration, generalized BSDEs with a boundary driver,
//! Freidlin–Wentzell action evaluation and minimization, and Monte Carlo
//! convergence studies.

pub mod action;
pub mod backward;
pub mod cli;
pub mod coefficients;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod forward;
pub mod linalg;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
