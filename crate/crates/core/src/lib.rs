//! Online Bayesian stacking.
//!
//! Ensemble weights over the predictive densities of several online Bayesian
//! models are chosen by online portfolio-selection algorithms (EG, Soft-Bayes,
//! ONS, D-ONS), with O-BMA, DMA and the best constantly rebalanced portfolio
//! (BCRP) as baselines. The crate is `no_std` and only needs `alloc`; all
//! transcendental functions go through [`libm`] so results are identical on
//! every target.
//!
//! - [`simplex`]: simplex-constrained weight vectors, density vectors and
//!   projections.
//! - [`stackers`]: the sequential weighting algorithms, the BCRP solver and
//!   the regret identities used as runtime checks.
//! - [`models`]: conjugate Gaussian linear models, random Fourier feature GPs
//!   with random-walk drift and a GARCH(1,1) particle filter.
//! - [`datagen`]: seeded synthetic streams.

#![no_std]

extern crate alloc;

pub mod datagen;
pub mod error;
pub mod linalg;
pub mod math;
pub mod models;
pub mod rng;
pub mod simplex;
pub mod stackers;

pub use error::{Error, Result};
pub use simplex::{DensityVector, MetricMatrix, SimplexWeights};
