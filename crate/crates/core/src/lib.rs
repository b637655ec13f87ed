//! PAC-Bayes generalization bounds with integral probability metrics.
//!
//! Bounds controlled by total variation or Wasserstein distance between a
//! posterior and a prior, alongside the classical KL bound, plus a
//! reference linear-regression experiment that trains Gaussian posteriors
//! by minimizing each bound.

pub mod bounds;
pub mod divergences;
pub mod error;
pub mod experiment;
pub mod linreg;
pub mod measures;
pub mod verify;

pub use error::{Error, Result};
