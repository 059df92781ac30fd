//! Gaussian-copula null model: per-feature ZIPG marginals plus a latent
//! correlation matrix, and sampling of synthetic-null count matrices.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, norm_cdf, norm_quantile, repair_correlation, sample_correlation, MIN_EIGENVALUE};
use crate::matrix::{CountMatrix, Matrix};
use crate::rng::{substream, Purpose};
use crate::zipg::dist::{cdf_unchecked, quantile_unchecked};
use crate::zipg::params::link_unchecked;
use crate::zipg::{em_fit, EmConfig, ZipgParams};

/// Transformed values are kept this far inside (0, 1) so the probit stays finite.
const U_MARGIN: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub features: Vec<ZipgParams>,
    /// Row-major p × p repaired correlation.
    pub corr: Vec<Vec<f64>>,
    pub d: usize,
    /// `true` where the feature was degenerate and EM was skipped.
    pub feature_flags: Vec<bool>,
    /// EM convergence per feature.
    pub converged: Vec<bool>,
}

impl NullModel {
    pub fn p(&self) -> usize {
        self.features.len()
    }

    pub fn corr_matrix(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| self.corr[i][j])
    }

    /// SHA-256 of the JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("NullModel serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_inputs(&self, n: usize, x: &Matrix, depths: &[f64]) -> Result<()> {
        check_design(n, x, depths)?;
        if x.ncols() != self.d {
            return Err(Error::Dimension(format!("model has d = {}, covariates have {} columns", self.d, x.ncols())));
        }
        if self.corr.len() != self.p() || self.corr.iter().any(|r| r.len() != self.p()) {
            return Err(Error::Dimension("correlation matrix does not match the feature count".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticNull {
    pub counts: CountMatrix,
    pub seed: u64,
    pub model_hash: String,
}

fn check_design(n: usize, x: &Matrix, depths: &[f64]) -> Result<()> {
    if x.nrows() != n || depths.len() != n {
        return Err(Error::Dimension(format!(
            "{n} samples but covariates have {} rows and depths {} entries",
            x.nrows(),
            depths.len()
        )));
    }
    if depths.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(Error::Domain("depths must be finite and > 0".into()));
    }
    Ok(())
}

/// Randomized probability-integral transform of one count:
/// `v·F(w−1) + (1−v)·F(w)`.
#[inline]
pub fn transform_value(w: u64, lambda: f64, theta: f64, pi: f64, v: f64) -> f64 {
    let lo = cdf_unchecked(w as i64 - 1, lambda, theta, pi);
    let hi = cdf_unchecked(w as i64, lambda, theta, pi);
    v * lo + (1.0 - v) * hi
}

fn transform_column(w: &[u64], params: &ZipgParams, rows: &[Vec<f64>], log_depth: &[f64], seed: u64, j: usize) -> Vec<f64> {
    let mut rng = substream(seed, Purpose::Transform, j as u64);
    w.iter()
        .enumerate()
        .map(|(i, &wi)| {
            let link = link_unchecked(params, &rows[i], log_depth[i]);
            let v: f64 = rng.random();
            transform_value(wi, link.lambda, link.theta, link.pi, v).clamp(U_MARGIN, 1.0 - U_MARGIN)
        })
        .collect()
}

/// Distributional transform of every entry under the individual-specific
/// fitted CDFs. Column `j` draws its uniforms from substream `(seed, j)`.
pub fn distribution_transform(w: &CountMatrix, model: &NullModel, x: &Matrix, depths: &[f64], seed: u64) -> Result<Matrix> {
    if w.ncols() != model.p() {
        return Err(Error::Dimension(format!("model has {} features, data {}", model.p(), w.ncols())));
    }
    model.check_inputs(w.nrows(), x, depths)?;
    let rows = x.rows();
    let log_depth: Vec<f64> = depths.iter().map(|m| m.ln()).collect();
    let cols: Vec<Vec<f64>> = (0..w.ncols())
        .into_par_iter()
        .map(|j| transform_column(w.col(j), &model.features[j], &rows, &log_depth, seed, j))
        .collect();
    Matrix::from_columns(w.nrows(), cols)
}

/// Sample correlation of the probit-transformed columns, repaired to be
/// positive definite with unit diagonal.
pub fn estimate_correlation(u: &Matrix) -> Result<DMatrix<f64>> {
    if u.nrows() < 3 {
        return Err(Error::Data(format!("need at least 3 rows to estimate a correlation, got {}", u.nrows())));
    }
    let mut cols = Vec::with_capacity(u.ncols());
    for j in 0..u.ncols() {
        let c = u.col(j);
        if c.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Domain(format!("column {j} has values outside (0, 1)")));
        }
        cols.push(c.iter().map(|&v| norm_quantile(v)).collect::<Vec<_>>());
    }
    if cols.len() == 1 {
        return Ok(DMatrix::identity(1, 1));
    }
    Ok(repair_correlation(&sample_correlation(&cols), MIN_EIGENVALUE))
}

/// Fit every feature by EM, then estimate the copula correlation.
pub fn fit_null_model(w: &CountMatrix, x: &Matrix, depths: &[f64], cfg: &EmConfig, seed: u64) -> Result<NullModel> {
    let (n, p, d) = (w.nrows(), w.ncols(), x.ncols());
    check_design(n, x, depths)?;
    if p == 0 {
        return Err(Error::Data("no features".into()));
    }
    if n <= 2 * d + 2 {
        return Err(Error::Data(format!("need more than {} samples for d = {d}, got {n}", 2 * d + 2)));
    }
    let reports = (0..p)
        .into_par_iter()
        .map(|j| em_fit(w.col(j), x, depths, cfg))
        .collect::<Result<Vec<_>>>()?;
    if reports.iter().all(|r| r.degenerate) {
        return Err(Error::Data("every feature is degenerate (all zero or fewer than three distinct values)".into()));
    }
    let mut model = NullModel {
        feature_flags: reports.iter().map(|r| r.degenerate).collect(),
        converged: reports.iter().map(|r| r.converged).collect(),
        features: reports.into_iter().map(|r| r.params).collect(),
        corr: vec![vec![0.0; p]; p],
        d,
    };
    let u = distribution_transform(w, &model, x, depths, seed)?;
    let r = estimate_correlation(&u)?;
    model.corr = (0..p).map(|i| (0..p).map(|j| r[(i, j)]).collect()).collect();
    Ok(model)
}

/// Draw `n` synthetic-null individuals: latent `N(0, R̂)` vectors through
/// `Φ` and the individual-specific ZIPG quantile functions. Row `i` uses
/// the covariates and depth of row `i` of `x`/`depths`.
pub fn sample_synthetic_null(model: &NullModel, x: &Matrix, depths: &[f64], seed: u64) -> Result<SyntheticNull> {
    let n = x.nrows();
    model.check_inputs(n, x, depths)?;
    let p = model.p();
    let l = cholesky_lower(&model.corr_matrix())?;
    // Column j of the innovations comes from its own substream.
    let eps_cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut rng = substream(seed, Purpose::Sample, j as u64);
            (0..n).map(|_| rng.sample(StandardNormal)).collect()
        })
        .collect();
    let eps = DMatrix::from_fn(n, p, |i, j| eps_cols[j][i]);
    let latent = eps * l.transpose();
    let rows = x.rows();
    let log_depth: Vec<f64> = depths.iter().map(|m| m.ln()).collect();
    let cols = (0..p)
        .into_par_iter()
        .map(|j| {
            (0..n)
                .map(|i| {
                    let link = link_unchecked(&model.features[j], &rows[i], log_depth[i]);
                    let u = norm_cdf(latent[(i, j)]).min(1.0 - f64::EPSILON);
                    quantile_unchecked(u, link.lambda, link.theta, link.pi)
                })
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticNull { counts: CountMatrix::from_columns(n, cols)?, seed, model_hash: model.hash() })
}
