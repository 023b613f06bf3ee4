//! Fair classification under distribution shift.
//!
//! This crate trains linear and shallow classifiers whose objective adds
//! a dependence penalty between predictions and a sensitive attribute,
//! robustified over an uncertainty ball around the estimated dependence
//! spectrum. The pieces:
//!
//! - [`data`]: CSV loading, categorical encoding, standardization,
//!   stratified splits, and resampling that moves a conditional group
//!   rate to a target (the distribution-shift generator).
//! - [`model`]: multinomial logistic regression and a one-hidden-layer
//!   perceptron with hand-derived gradients.
//! - [`fairness`]: the normalized prediction/attribute dependence matrix,
//!   its trace and spectral measures, the variational form built on a
//!   per-sample kernel, and the gradients that chain through it.
//! - [`robust`]: closed-form worst-case dependence over l1/l2/l-infinity
//!   balls on the singular values, with a brute-force search oracle.
//! - [`train`]: deterministic, stochastic min-max, tail-risk, and
//!   group-reweighting solvers with traced objectives.
//! - [`synth`]: synthetic benchmark data with controlled group bias.
//! - [`check`]: finite-difference and grid-search oracles for every
//!   hand-derived quantity.
//!
//! All randomness is seeded; equal seeds give bitwise-equal results.

pub mod check;
pub mod data;
pub mod error;
pub mod fairness;
pub mod linalg;
pub mod model;
pub mod robust;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
