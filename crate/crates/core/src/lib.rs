//! Partition functions, bi-orthogonal polynomials, correlation kernels and
//! correlation functions of the θ-deformed Cauchy two-matrix model and the
//! θ-deformed Bures ensemble, with their Fox H / Meijer G building blocks.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlations;
pub mod ensembles;
pub mod error;
pub mod foxh;
pub mod kernels;
pub mod numerics;
pub mod polynomials;
pub mod raney;

pub use error::{Error, Result};
