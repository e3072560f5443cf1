//! Tail-index estimation and Bayesian Pareto-mixture models.
//!
//! The crate covers Pareto mixtures and the moment-bound classifier for
//! location-scale mixtures ([`dist`]), Lévy intensities and normalized
//! random measures ([`levy`]), frequentist tail-index estimators and the
//! `n`-indexed prior schedule ([`estimators`]), the Pareto-mixture prior
//! ([`parmix`]), a posterior sampler ([`mcmc`]) and the experiment harness
//! with its CLI ([`harness`]).

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod levy;
pub mod mcmc;
pub mod parallel;
pub mod parmix;
pub mod quadrature;
pub mod seeds;

pub use error::{Error, Result};
