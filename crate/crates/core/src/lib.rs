//! Weighted action functionals for learning dynamics: discretization,
//! direct minimization, causal integration and limit experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod banded;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod limits;
pub mod parallel;
pub mod plot;
pub mod potential;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Hypothesis, Result};
