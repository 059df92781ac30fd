//! Normal-distribution helpers, correlation estimation and positive-definite repair.

use nalgebra::{DMatrix, SymmetricEigen};
use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Smallest eigenvalue allowed in a repaired correlation matrix.
pub const MIN_EIGENVALUE: f64 = 1e-4;

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile for `u` in (0, 1).
#[inline]
pub fn norm_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Pearson correlation of the columns of `data` (each inner vec is one column).
/// Zero-variance columns get zero correlation with everything else.
pub fn sample_correlation(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let p = columns.len();
    let centered: Vec<(Vec<f64>, f64)> = columns
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let v: Vec<f64> = c.iter().map(|x| x - mean).collect();
            let ss = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            (v, ss)
        })
        .collect();
    let mut r = DMatrix::<f64>::identity(p, p);
    for a in 0..p {
        for b in (a + 1)..p {
            let (va, sa) = &centered[a];
            let (vb, sb) = &centered[b];
            let rho = if *sa > 0.0 && *sb > 0.0 {
                let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                (dot / (sa * sb)).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            r[(a, b)] = rho;
            r[(b, a)] = rho;
        }
    }
    r
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Project a symmetric matrix to a correlation matrix with eigenvalues
/// bounded below by `floor`: clip eigenvalues, rescale to unit diagonal,
/// then shrink toward the identity by the exact amount still missing.
pub fn repair_correlation(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let p = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let needs_clip = eig.eigenvalues.iter().any(|&l| l < floor);
    let mut r = if needs_clip {
        let clipped = eig.eigenvalues.map(|l| l.max(floor));
        let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        rescale_unit_diagonal(&rebuilt)
    } else {
        rescale_unit_diagonal(&sym)
    };
    let lo = min_eigenvalue(&r);
    if lo < floor {
        // (R + δI)/(1 + δ) has unit diagonal and minimum eigenvalue (lo + δ)/(1 + δ).
        let delta = (floor - lo) / (1.0 - floor) * (1.0 + 1e-9) + 1e-15;
        r = (r + DMatrix::<f64>::identity(p, p) * delta) / (1.0 + delta);
    }
    for i in 0..p {
        r[(i, i)] = 1.0;
        for j in (i + 1)..p {
            let v = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

fn rescale_unit_diagonal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..m.nrows()).map(|i| m[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] / (d[i] * d[j]))
}

/// Lower Cholesky factor.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical("Cholesky factorization failed on a repaired matrix".into()))
}

/// Average ranks (ties share the mean rank), 1-based.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let r = sample_correlation(&[average_ranks(a), average_ranks(b)]);
    r[(0, 1)]
}
