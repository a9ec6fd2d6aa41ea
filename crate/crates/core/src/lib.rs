//! Stochastic gradient methods (mini-batch SGD, SVRG Option II), their
//! continuous-time diffusion models, closed-form rate bounds, and a
//! Monte-Carlo harness that checks simulated ensembles against those bounds.
//!
//! Module map:
//!
//! - [`problems`]: finite-sum objectives with analytic gradients and declared constants.
//! - [`estimators`]: mini-batch / variance-reduced gradient estimators and their exact covariances.
//! - [`schedules`]: adjustment function `psi`, its integral `phi` and inverse, batch and staleness schedules.
//! - [`discrete`]: the iterative algorithms (SGD, PGD, SVRG Option II).
//! - [`continuous`]: Euler–Maruyama integration of the SDE / SDDE models.
//! - [`bounds`]: every rate bound as an evaluable function.
//! - [`harness`]: ensembles, bound verification and the named experiments.
//! - [`cli`]: config parsing and the command-line front end.

pub mod bounds;
pub mod cli;
pub mod continuous;
pub mod discrete;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod problems;
pub mod quadrature;
pub mod rng;
pub mod schedules;
pub mod trajectory;

pub use error::{Error, Result};

/// Column vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
