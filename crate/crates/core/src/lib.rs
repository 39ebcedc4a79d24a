//! Penalized-complexity (PC) priors for Bayesian varying coefficient models.
//!
//! The crate is organised around the pieces needed to go from a model family
//! to a fitted hyperparameter posterior:
//!
//! - [`gmrf`] builds correlation matrices and intrinsic structure matrices
//!   (exchangeable, AR1, RW1/RW2, ICAR, Matérn).
//! - [`distance`] computes Kullback-Leibler divergences between zero-mean
//!   Gaussians and the distance `d = sqrt(2 KLD)` to the base model.
//! - [`pcpriors`] holds the four PC-prior families, the uniform and reference
//!   comparison priors, and their distance-scale densities.
//! - [`scaling`] turns a `(U, a)` tail statement into rate parameters.
//! - [`inference`] is an exact-Gaussian grid engine for toy varying
//!   coefficient models plus the prior-comparison simulation.
//! - [`cli`] is the command-line front end used by the `pcvcm` binary.

pub mod cli;
pub mod distance;
pub mod error;
pub mod gmrf;
pub mod inference;
pub mod pcpriors;
pub mod scaling;

pub use error::{Error, Result};
