//! Simultaneous knockoff selection for multi-source, zero-inflated count data.
//!
//! Each source is modelled with per-feature zero-inflated Poisson-Gamma (ZIPG)
//! marginals tied together by a Gaussian copula. Synthetic null copies are
//! sampled from the fitted model, paired test statistics are computed on real
//! and synthetic data, the per-source statistics are combined by a one-swap
//! flip-sign function, and the knockoff filter picks features that are
//! associated with the outcome in every source at a target FDR.
//!
//! Module map:
//! - [`zipg`]: distribution functions and the EM fitter
//! - [`copula`]: null-model fitting and synthetic-null sampling
//! - [`statistics`]: Wilcoxon/clustering DE scores and lasso coefficients
//! - [`simultaneous`]: OSFF combination and knockoff thresholds
//! - [`aggregate`]: e-value derandomization over repeated knockoffs
//! - [`simgen`]: simulation generator and FDP/power scoring
//! - [`pipeline`]: end-to-end orchestration used by the CLI

pub mod aggregate;
pub mod copula;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod simgen;
pub mod simultaneous;
pub mod statistics;
pub mod zipg;

pub use error::{Error, Result};
pub use matrix::{CountMatrix, Matrix};
