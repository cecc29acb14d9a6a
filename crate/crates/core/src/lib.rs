//! Learns a kernelized velocity-form model of an unknown nonlinear system from
//! state–input–output data and uses it in an offset-free predictive controller
//! solved by sequential quadratic programming.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernel`]: positive-semidefinite kernel functions and stacked kernel
//!   section vectors.
//! - [`plant`]: the discretized pendulum benchmark, excitation signals and
//!   dataset recording.
//! - [`optim`]: dense QP/LP solvers, a discrete Riccati solver and min-norm
//!   least squares.
//! - [`model`]: incremental-model regressors, the least-squares fit and the
//!   multi-step prediction matrices.
//! - [`analytic`]: exact velocity-form matrices of the pendulum, used by the
//!   model-based baseline controller and as a gradient oracle.
//! - [`polytope`] / [`terminal`]: halfspace polytopes, invariant sets and
//!   per-reference terminal ingredients.
//! - [`controller`]: the sequential-QP tracking controllers.
//! - [`harness`]: scenario configuration, closed-loop simulation, metrics and
//!   artifact emission.

pub mod analytic;
pub mod controller;
pub mod harness;
pub mod kernel;
pub mod model;
pub mod optim;
pub mod plant;
pub mod polytope;
pub mod terminal;

#[doc(hidden)]
pub mod guide;
