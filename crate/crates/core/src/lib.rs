//! Consensus cost of time-triggered (TTC) and event-triggered (ETC) control
//! for single-integrator agents sharing a lossy, delayed broadcast channel.
//!
//! The crate is split along the lines of the analysis:
//!
//! - [`first_exit`]: Brownian interval-exit survival series, the expected
//!   minimum exit time and the pure-ALOHA loss probability.
//! - [`cost`]: closed-form TTC/TDMA and ETC/ALOHA costs and the loss/delay
//!   cost decomposition.
//! - [`sim`]: Monte Carlo path sampling, constant estimation and the full
//!   networked event simulation used to check the analytic results.
//! - [`stats`] and [`rng`]: batch-means estimators and reproducible
//!   per-replication random streams.
//!
//! All analytic routines work in the normalization where the trigger
//! threshold is `Δ = 1`; callers rescale times with `Δ²`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod error;
pub mod first_exit;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
