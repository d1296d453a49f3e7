//! Model-based policy gradient learning through embedded low-level feedback
//! controllers.
//!
//! The library rolls policies out on a "true" dynamical system while
//! differentiating an approximate model along the same trajectory, which
//! yields sample-efficient policy gradient estimates whose bias depends only
//! on the model's derivative error. Embedding a stabilizing tracking
//! controller inside the policy class keeps closed-loop sensitivities from
//! growing with the horizon; the [`diagnostics`] module measures exactly
//! that effect (gradient bias, estimator variance, and Hessian conditioning
//! as functions of the horizon).
//!
//! Modules:
//! - [`dynamics`]: analytic state-space models, Jacobians, closed-loop rollouts.
//! - [`policy`]: open-loop, tracking, and neural-corrected tracking policies
//!   with exact state and parameter Jacobians.
//! - [`reward`]: differentiable per-step reward functions.
//! - [`estimator`]: forward/backward policy gradient forms, batch estimates,
//!   and a finite-difference oracle.
//! - [`diagnostics`]: transition matrices, error-propagation decomposition,
//!   Hessian estimates, condition numbers, and horizon scaling studies.
//! - [`trainer`]: batch gradient ascent with seeded, reproducible sampling.
//! - [`config`] / [`cli`]: TOML experiment configs and the command-line
//!   entry points with CSV outputs.
//!
//! The `examples/` directory contains one runnable example per capability;
//! start with `cargo run --example gradient_check`.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod policy;
pub mod reward;
pub mod trainer;

pub use error::{Error, Result};
