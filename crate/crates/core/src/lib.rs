//! Cut-posterior Bayesian inference for finite-state hidden Markov models
//! with nonparametric emission densities.
//!
//! The transition matrix is learned from a coarsened (binned) version of the
//! data under a histogram prior ([`histogram`]), and the emission densities are
//! then sampled conditionally on each transition-matrix draw under truncated
//! Dirichlet-process mixtures of Gaussians ([`dpm`]). The shared exact HMM
//! recursions live in [`hmm`]; [`spectral`] provides a method-of-moments
//! initializer and [`diagnostics`] the asymptotic checks (MLE, observed
//! information, Bernstein–von Mises comparisons).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dpm;
pub mod error;
pub mod histogram;
pub mod hmm;
pub mod io;
pub mod partition;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
