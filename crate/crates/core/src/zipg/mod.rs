//! Zero-inflated Poisson-Gamma marginals.
//!
//! A ZIPG count is zero with probability `π`, and otherwise Poisson with a
//! Gamma-distributed rate of mean `λ` and dispersion `θ` (the usual NB2 law
//! with mean `λ` and variance `λ + θλ²`). Both `λ` and `θ` follow log-linear
//! models in the covariates, with `log(depth)` as an offset for `λ`.

pub(crate) mod dist;
mod em;
pub(crate) mod params;
mod special;

pub use dist::{pg_log_pmf, zipg_cdf, zipg_log_pmf, zipg_quantile, CDF_TAIL_CUTOFF};
pub use em::{
    complete_loglik, e_step, em_fit, init_params, is_degenerate, observed_loglik, q_gradient,
    EmConfig, FitReport,
};
pub use params::{link_eval, logistic, logit, Link, ZipgParams, EXPONENT_CLAMP, GAMMA_CLAMP};
