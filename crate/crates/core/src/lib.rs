//! Adaptive sample-size control for sequences of slowly drifting stochastic
//! optimization tasks.
//!
//! Task `n` asks for an approximate minimizer of `f_n(x) = E[loss(x, z_n)]`
//! whose minimizer moves by (at most) `rho` per step. Each task is solved with
//! projected SGD on `K_n` fresh samples. The drift is estimated online and
//! `K_n` is chosen so the mean optimality gap stays below a target `eps`.
//!
//! Module map:
//!
//! - [`objective`]: feasible sets, loss models, task sequences, batch statistics
//! - [`sgd`]: projected SGD, step schedules, iterate averaging
//! - [`gap_bounds`]: the `b(d0, K)` family of mean-gap bounds
//! - [`drift`]: one-step drift estimates and their combination into `rho_hat`
//! - [`params`]: estimators for the function constants `(m, M, A, B)`
//! - [`controller`]: budget selection, gap-bound propagation, fixed points
//! - [`concentration`]: sub-Gaussian and Hoeffding-type tail calculators
//! - [`synth`]: synthetic regression and classification sequences
//! - [`harness`]: config-driven batch runs, CSV replay, plot tables

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod concentration;
pub mod controller;
pub mod drift;
pub mod error;
pub mod gap_bounds;
pub mod harness;
pub mod linalg;
pub mod objective;
pub mod params;
pub mod rng;
pub mod sgd;
pub mod synth;

pub use error::{Error, Result};
