//! Bayesian fitting, model comparison and goodness-of-fit assessment for
//! subdiffusive particle trajectories.
//!
//! Two families of increment models are supported: fractional Brownian motion
//! and a zero-mass generalized Langevin equation whose memory kernel has a
//! power-law (generalized Rouse) relaxation spectrum. Both are embedded in a
//! location-scale model `X(t) = mu t + Sigma^{1/2} Z(t)` for 2-D positions, so
//! that the increments are matrix-normal with a Toeplitz row covariance.
//!
//! Module map:
//!
//! - [`trajectory`]: data model, CSV ingestion, pathwise MSD, principal axes.
//! - [`acf`]: closed-form increment autocovariances and theoretical MSDs.
//! - [`gausslik`]: Durbin-Levinson likelihood, profile likelihood, exact
//!   simulation and whitened residuals.
//! - [`conjugate`]: matrix-normal / inverse-Wishart updates, grid posteriors
//!   over the kernel parameters, marginal likelihoods and posterior sampling.
//! - [`hierarchical`]: the parallel approximate hierarchical fit producing a
//!   data-driven conjugate prior.
//! - [`selection`]: Bayes factors and simulation studies.
//! - [`checks`]: prior and posterior predictive diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acf;
pub mod checks;
pub mod conjugate;
pub mod error;
pub mod gausslik;
pub mod hierarchical;
pub mod linalg;
pub mod model;
pub mod output;
pub mod rng;
pub mod selection;
pub mod stats;
pub mod trajectory;

pub use error::{Error, ErrorKind, Result};
pub use model::{ModelFamily, Theta, Vartheta};
pub use rng::Seed;
