//! Experiment driver for the consensus cost model: estimates simulation
//! constants, sweeps load grids, and checks the analytic results against
//! simulation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use error::{CliError, Result};
