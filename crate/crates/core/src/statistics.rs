//! Paired test statistics `(Z, Z̃)` for one source.
//!
//! Two backends: DE contrast scores (`−log₁₀` Wilcoxon p-values, real data
//! split by the outcome, synthetic data split by the outcome or by 2-means
//! cluster labels) and
//! absolute L1-penalized logistic-regression coefficients fitted on the
//! concatenation `[W, W̃]`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{average_ranks, norm_sf};
use crate::matrix::CountMatrix;
use crate::rng::{derive_seed, substream, Purpose};

/// Smallest p-value used for scores, so `−log₁₀ p` stays finite.
pub const P_FLOOR: f64 = 1e-300;
/// Largest total sample size handled by exact enumeration.
const EXACT_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    De,
    Glm,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "de" => Ok(Self::De),
            "glm" => Ok(Self::Glm),
            other => Err(Error::Config(format!("unknown backend '{other}' (expected de or glm)"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::De => "de",
            Self::Glm => "glm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStats {
    pub z: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub backend: Backend,
    pub source_id: String,
}

impl TestStats {
    pub fn p(&self) -> usize {
        self.z.len()
    }

    /// `Z − Z̃`.
    pub fn contrast(&self) -> Vec<f64> {
        self.z.iter().zip(&self.z_tilde).map(|(a, b)| a - b).collect()
    }
}

// ---------------------------------------------------------------------------
// Wilcoxon rank-sum

/// Two-sided Wilcoxon rank-sum p-value. Exact when the pooled sample has at
/// most 10 values and no ties; otherwise the normal approximation with
/// tie-corrected variance and continuity correction.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("rank-sum test needs at least one value per group".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Domain("rank-sum test values must be finite".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let w: f64 = ranks[..a.len()].iter().sum();
    let has_ties = {
        let mut s = pooled.clone();
        s.sort_by(f64::total_cmp);
        s.windows(2).any(|x| x[0] == x[1])
    };
    if pooled.len() <= EXACT_LIMIT && !has_ties {
        Ok(exact_p(a.len(), pooled.len(), w.round() as usize))
    } else {
        Ok(normal_p(a.len(), b.len(), w, &ranks))
    }
}

/// Exact null distribution of the rank sum of `m` of the ranks `1..=n`.
fn exact_p(m: usize, n: usize, w: usize) -> f64 {
    let max_sum = n * (n + 1) / 2;
    // counts[k][s]: subsets of size k with rank sum s
    let mut counts = vec![vec![0u64; max_sum + 1]; m + 1];
    counts[0][0] = 1;
    for r in 1..=n {
        for k in (1..=m.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                counts[k][s] += counts[k - 1][s - r];
            }
        }
    }
    let total: u64 = counts[m].iter().sum();
    let lower: u64 = counts[m][..=w].iter().sum();
    let upper: u64 = counts[m][w..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

fn normal_p(m: usize, k: usize, w: f64, ranks: &[f64]) -> f64 {
    let (mf, kf) = (m as f64, k as f64);
    let n = mf + kf;
    let mean = mf * (n + 1.0) / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = mf * kf / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let dev = ((w - mean).abs() - 0.5).max(0.0);
    (2.0 * norm_sf(dev / var.sqrt())).min(1.0)
}

// ---------------------------------------------------------------------------
// 2-means clustering

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 100;

/// Two-cluster labels for the rows of `w`: 2-means on log1p counts with
/// standardized columns, best of 10 restarts. Labels are canonical (row 0
/// gets 0). If every row is identical the labels alternate.
pub fn cluster_null(w: &CountMatrix, seed: u64) -> Result<Vec<u8>> {
    let n = w.nrows();
    if n < 4 {
        return Err(Error::Data(format!("clustering needs at least 4 rows, got {n}")));
    }
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..w.ncols() {
        let c: Vec<f64> = w.col(j).iter().map(|&v| (v as f64).ln_1p()).collect();
        if let Some(s) = standardize(&c) {
            cols.push(s);
        }
    }
    let alternate = || (0..n).map(|i| (i % 2) as u8).collect::<Vec<_>>();
    if cols.is_empty() {
        return Ok(alternate());
    }
    // Row-major points.
    let dim = cols.len();
    let pts: Vec<f64> = (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
    let row = |i: usize| &pts[i * dim..(i + 1) * dim];

    let mut rng = substream(seed, Purpose::Cluster, 0);
    let mut best: Option<(f64, Vec<u8>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        // k-means++ seeding: first center uniform, second proportional to squared distance.
        let a = rng.random_range(0..n);
        let d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(a))).collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let mut t = rng.random::<f64>() * total;
        let mut b = n - 1;
        for (i, &v) in d2.iter().enumerate() {
            if t < v {
                b = i;
                break;
            }
            t -= v;
        }
        let mut centers = [row(a).to_vec(), row(b).to_vec()];
        let mut labels = vec![0u8; n];
        for iter in 0..KMEANS_MAX_ITER {
            let mut changed = false;
            for (i, l) in labels.iter_mut().enumerate() {
                let new = u8::from(sq_dist(row(i), &centers[1]) < sq_dist(row(i), &centers[0]));
                changed |= new != *l;
                *l = new;
            }
            if iter > 0 && !changed {
                break;
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] as usize == c).collect();
                if members.is_empty() {
                    continue;
                }
                center.iter_mut().for_each(|v| *v = 0.0);
                for &i in &members {
                    for (v, x) in center.iter_mut().zip(row(i)) {
                        *v += x;
                    }
                }
                center.iter_mut().for_each(|v| *v /= members.len() as f64);
            }
        }
        let sizes = labels.iter().filter(|&&l| l == 1).count();
        if sizes == 0 || sizes == n {
            continue;
        }
        let wcss: f64 = (0..n).map(|i| sq_dist(row(i), &centers[labels[i] as usize])).sum();
        if best.as_ref().is_none_or(|(bw, _)| wcss < *bw) {
            best = Some((wcss, labels));
        }
    }
    Ok(match best {
        Some((_, mut labels)) => {
            if labels[0] == 1 {
                labels.iter_mut().for_each(|l| *l = 1 - *l);
            }
            labels
        }
        None => alternate(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Zero mean, unit (population) variance; `None` for a constant column.
fn standardize(c: &[f64]) -> Option<Vec<f64>> {
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 1e-24 * (1.0 + mean * mean) {
        return None;
    }
    let sd = var.sqrt();
    Some(c.iter().map(|v| (v - mean) / sd).collect())
}

// ---------------------------------------------------------------------------
// DE backend

/// Which labels split the synthetic null in the DE backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullLabels {
    /// 2-means cluster labels computed on the synthetic null.
    Cluster,
    /// The observed outcome labels. The synthetic null is independent of the
    /// outcome by construction, so this split is a valid null contrast.
    #[default]
    Outcome,
}

impl std::str::FromStr for NullLabels {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cluster" => Ok(Self::Cluster),
            "outcome" => Ok(Self::Outcome),
            other => Err(Error::Config(format!("unknown null labels '{other}' (expected cluster or outcome)"))),
        }
    }
}

pub(crate) fn check_binary(y: &[u8], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} samples", y.len())));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::Data("labels contain a single class".into()));
    }
    Ok(())
}

/// `−log₁₀` of the rank-sum p-value of every column split by `labels`.
pub fn de_scores(w: &CountMatrix, labels: &[u8]) -> Result<Vec<f64>> {
    check_binary(labels, w.nrows())?;
    (0..w.ncols())
        .into_par_iter()
        .map(|j| {
            let col = w.col(j);
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (&v, &l) in col.iter().zip(labels) {
                if l == 1 { a.push(v as f64) } else { b.push(v as f64) }
            }
            Ok(-wilcoxon_rank_sum(&a, &b)?.max(P_FLOOR).log10())
        })
        .collect()
}

/// DE contrast scores: `zⱼ` from the real data split by `y`, `z̃ⱼ` from the
/// synthetic null split by its cluster labels (or by `y`, see [`NullLabels`]).
pub fn de_stats(w: &CountMatrix, w_tilde: &CountMatrix, y: &[u8], null_labels: NullLabels, seed: u64) -> Result<TestStats> {
    check_pair(w, w_tilde)?;
    check_binary(y, w.nrows())?;
    let z = de_scores(w, y)?;
    let tilde_labels = match null_labels {
        NullLabels::Cluster => cluster_null(w_tilde, seed)?,
        NullLabels::Outcome => y.to_vec(),
    };
    let z_tilde = de_scores(w_tilde, &tilde_labels)?;
    Ok(TestStats { z, z_tilde, backend: Backend::De, source_id: String::new() })
}

fn check_pair(w: &CountMatrix, w_tilde: &CountMatrix) -> Result<()> {
    if w.nrows() != w_tilde.nrows() || w.ncols() != w_tilde.ncols() {
        return Err(Error::Dimension(format!(
            "real data is {}×{} but synthetic null is {}×{}",
            w.nrows(),
            w.ncols(),
            w_tilde.nrows(),
            w_tilde.ncols()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// GLM backend

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmConfig {
    pub n_lambda: usize,
    pub cv_folds: usize,
    /// Ratio `λ_min / λ_max` of the path.
    pub lambda_ratio: f64,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for GlmConfig {
    fn default() -> Self {
        Self { n_lambda: 50, cv_folds: 5, lambda_ratio: 1e-3, max_sweeps: 2000, tol: 1e-7 }
    }
}

/// Column-standardized design, stored column-major.
pub(crate) struct Design {
    pub cols: Vec<Vec<f64>>,
}

/// L1-penalized logistic regression with unpenalized intercept:
/// minimize `(1/n) Σ [log(1 + e^ηᵢ) − yᵢηᵢ] + λ‖β‖₁`.
///
/// Cyclic coordinate descent on the quadratic majorizer given by the global
/// curvature bound `μ(1−μ) ≤ 1/4`, so every coordinate step decreases the
/// objective. Sweeps alternate between the active set and full passes.
pub(crate) struct Lasso<'a> {
    design: &'a Design,
    rows: Vec<usize>,
    y: Vec<f64>,
    order: &'a [usize],
    /// Curvature bounds `(1/4)·mean(x²)` over the fitted rows.
    curv: Vec<f64>,
    pub beta: Vec<f64>,
    pub b0: f64,
    eta: Vec<f64>,
    resid: Vec<f64>,
}

impl<'a> Lasso<'a> {
    pub fn new(design: &'a Design, rows: Vec<usize>, y: &[u8], order: &'a [usize]) -> Self {
        let m = rows.len() as f64;
        let yv: Vec<f64> = rows.iter().map(|&i| y[i] as f64).collect();
        let ybar = yv.iter().sum::<f64>() / m;
        let b0 = (ybar / (1.0 - ybar)).ln();
        let curv = design.cols.iter().map(|c| 0.25 * rows.iter().map(|&i| c[i] * c[i]).sum::<f64>() / m).collect();
        let resid = yv.iter().map(|v| v - ybar).collect();
        Self { design, eta: vec![b0; rows.len()], resid, y: yv, rows, order, curv, beta: vec![0.0; design.cols.len()], b0 }
    }

    fn m(&self) -> f64 {
        self.rows.len() as f64
    }

    /// Smallest λ with an all-zero solution.
    pub fn lambda_max(&self) -> f64 {
        self.design.cols.iter().map(|c| self.grad(c).abs()).fold(0.0, f64::max)
    }

    fn grad(&self, c: &[f64]) -> f64 {
        self.rows.iter().zip(&self.resid).map(|(&i, r)| c[i] * r).sum::<f64>() / self.m()
    }

    #[cfg(test)]
    pub fn objective(&self, lambda: f64) -> f64 {
        let loss: f64 = self.eta.iter().zip(&self.y).map(|(&e, &y)| softplus(e) - y * e).sum::<f64>() / self.m();
        loss + lambda * self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn shift(&mut self, j: Option<usize>, delta: f64) {
        for (k, &i) in self.rows.iter().enumerate() {
            let dx = match j {
                Some(j) => self.design.cols[j][i] * delta,
                None => delta,
            };
            self.eta[k] += dx;
            self.resid[k] = self.y[k] - logistic(self.eta[k]);
        }
    }

    /// One sweep over `coords` (plus the intercept); returns the largest
    /// coefficient change scaled by its curvature.
    fn sweep(&mut self, lambda: f64, active_only: bool) -> f64 {
        let mut max_change: f64 = 0.0;
        let step0 = 4.0 * self.resid.iter().sum::<f64>() / self.m();
        if step0 != 0.0 {
            self.b0 += step0;
            self.shift(None, step0);
            max_change = max_change.max(0.25 * step0 * step0);
        }
        for &j in self.order {
            if active_only && self.beta[j] == 0.0 {
                continue;
            }
            let l = self.curv[j];
            if l == 0.0 {
                continue;
            }
            let g = self.grad(&self.design.cols[j]);
            let old = self.beta[j];
            let new = soft_threshold(old + g / l, lambda / l);
            if new != old {
                self.beta[j] = new;
                self.shift(Some(j), new - old);
                max_change = max_change.max(l * (new - old) * (new - old));
            }
        }
        max_change
    }

    /// Coordinate descent to convergence at `lambda`, warm-started.
    pub fn solve(&mut self, lambda: f64, cfg: &GlmConfig) -> usize {
        let mut sweeps = 0;
        while sweeps < cfg.max_sweeps {
            let full = self.sweep(lambda, false);
            sweeps += 1;
            if full < cfg.tol {
                break;
            }
            while sweeps < cfg.max_sweeps {
                let act = self.sweep(lambda, true);
                sweeps += 1;
                if act < cfg.tol {
                    break;
                }
            }
        }
        sweeps
    }

    /// Mean binomial deviance of held-out rows.
    pub fn deviance(&self, rows: &[usize], y: &[u8]) -> f64 {
        let total: f64 = rows
            .iter()
            .map(|&i| {
                // Summed in coordinate order so the result is invariant under relabelling.
                let eta = self.b0 + self.order.iter().filter(|&&j| self.beta[j] != 0.0).map(|&j| self.design.cols[j][i] * self.beta[j]).sum::<f64>();
                2.0 * (softplus(eta) - y[i] as f64 * eta)
            })
            .sum();
        total / rows.len() as f64
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() }
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub(crate) fn lambda_path(lambda_max: f64, cfg: &GlmConfig) -> Vec<f64> {
    let k = cfg.n_lambda.max(1);
    if k == 1 {
        return vec![lambda_max];
    }
    (0..k).map(|i| lambda_max * cfg.lambda_ratio.powf(i as f64 / (k - 1) as f64)).collect()
}

fn make_folds(y: &[u8], k: usize, seed: u64, stratified: bool) -> Vec<usize> {
    let n = y.len();
    let mut rng = substream(seed, Purpose::Folds, u64::from(stratified));
    let mut fold = vec![0; n];
    if stratified {
        for class in 0..2u8 {
            let mut idx: Vec<usize> = (0..n).filter(|&i| y[i] == class).collect();
            idx.shuffle(&mut rng);
            for (r, &i) in idx.iter().enumerate() {
                fold[i] = r % k;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for (r, &i) in idx.iter().enumerate() {
            fold[i] = r % k;
        }
    }
    fold
}

fn folds_ok(y: &[u8], fold: &[usize], k: usize) -> bool {
    (0..k).all(|f| {
        let test: Vec<u8> = fold.iter().zip(y).filter(|(g, _)| **g == f).map(|(_, v)| *v).collect();
        let train: Vec<u8> = fold.iter().zip(y).filter(|(g, _)| **g != f).map(|(_, v)| *v).collect();
        let varied = |v: &[u8]| v.contains(&0) && v.contains(&1);
        !test.is_empty() && varied(&test) && varied(&train)
    })
}

/// Build the standardized `log1p` design of `[W, W̃]`; constant columns become zero.
pub(crate) fn glm_design(w: &CountMatrix, w_tilde: &CountMatrix) -> Design {
    let n = w.nrows();
    let cols = (0..w.ncols())
        .map(|j| w.col(j))
        .chain((0..w_tilde.ncols()).map(|j| w_tilde.col(j)))
        .map(|c| {
            let l: Vec<f64> = c.iter().map(|&v| (v as f64).ln_1p()).collect();
            standardize(&l).unwrap_or_else(|| vec![0.0; n])
        })
        .collect();
    Design { cols }
}

/// Lasso statistics with a random joint ordering of the `2p` columns.
pub fn glm_stats(w: &CountMatrix, w_tilde: &CountMatrix, y: &[u8], cfg: &GlmConfig, seed: u64) -> Result<TestStats> {
    let mut perm: Vec<usize> = (0..2 * w.ncols()).collect();
    perm.shuffle(&mut substream(seed, Purpose::Permute, 0));
    glm_stats_with_permutation(w, w_tilde, y, cfg, &perm, derive_seed(seed, Purpose::Folds, 0))
}

/// Lasso statistics with an explicit coordinate order `perm` over the `2p`
/// columns of `[W, W̃]` and fold seed `fold_seed`.
pub fn glm_stats_with_permutation(w: &CountMatrix, w_tilde: &CountMatrix, y: &[u8], cfg: &GlmConfig, perm: &[usize], fold_seed: u64) -> Result<TestStats> {
    check_pair(w, w_tilde)?;
    let (n, p) = (w.nrows(), w.ncols());
    check_binary(y, n)?;
    let mut seen = vec![false; 2 * p];
    if perm.len() != 2 * p || perm.iter().any(|&j| j >= 2 * p || std::mem::replace(&mut seen[j], true)) {
        return Err(Error::Config(format!("coordinate order must be a permutation of 0..{}", 2 * p)));
    }
    let k = cfg.cv_folds;
    if k < 2 || k > n {
        return Err(Error::Config(format!("cv_folds must lie in 2..={n}, got {k}")));
    }
    let design = glm_design(w, w_tilde);
    let all: Vec<usize> = (0..n).collect();
    let full = Lasso::new(&design, all.clone(), y, perm);
    let path = lambda_path(full.lambda_max(), cfg);

    let mut fold = make_folds(y, k, fold_seed, false);
    if !folds_ok(y, &fold, k) {
        fold = make_folds(y, k, fold_seed, true);
        if !folds_ok(y, &fold, k) {
            return Err(Error::Data("cannot form cross-validation folds with both classes in every fold".into()));
        }
    }
    let cv: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = all.iter().copied().filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = all.iter().copied().filter(|&i| fold[i] == f).collect();
            let mut fit = Lasso::new(&design, train, y, perm);
            path.iter()
                .map(|&lam| {
                    fit.solve(lam, cfg);
                    fit.deviance(&test, y) * test.len() as f64
                })
                .collect()
        })
        .collect();
    let mut best = 0;
    let mut best_dev = f64::INFINITY;
    for (l, _) in path.iter().enumerate() {
        let dev: f64 = cv.iter().map(|d| d[l]).sum::<f64>() / n as f64;
        if dev < best_dev {
            best_dev = dev;
            best = l;
        }
    }
    let mut fit = full;
    for &lam in &path[..=best] {
        fit.solve(lam, cfg);
    }
    let z = fit.beta[..p].iter().map(|b| b.abs()).collect();
    let z_tilde = fit.beta[p..].iter().map(|b| b.abs()).collect();
    Ok(TestStats { z, z_tilde, backend: Backend::Glm, source_id: String::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use rand_distr::{Distribution, Poisson};

    fn rank_sum_stat(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        average_ranks(&pooled)[..a.len()].iter().sum()
    }

    #[test]
    fn wilcoxon_exact_small_case() {
        let p = wilcoxon_rank_sum(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
        // Symmetric: swapping groups gives the same two-sided p.
        assert_eq!(p, wilcoxon_rank_sum(&[3.0, 4.0], &[1.0, 2.0]).unwrap());
    }

    #[test]
    fn wilcoxon_exact_against_enumeration() {
        // Enumerate all C(7,3) rank assignments directly.
        let a = [0.3, 2.2, 5.1];
        let b = [1.0, 1.7, 3.3, 4.4];
        let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        let observed = rank_sum_stat(&a, &b);
        let ranks = average_ranks(&pooled);
        let mean = 3.0 * 8.0 / 2.0;
        let (mut extreme, mut total) = (0, 0);
        for i in 0..7 {
            for j in i + 1..7 {
                for k in j + 1..7 {
                    let s = ranks[i] + ranks[j] + ranks[k];
                    total += 1;
                    if (s - mean).abs() >= (observed - mean).abs() - 1e-12 {
                        extreme += 1;
                    }
                }
            }
        }
        // The null distribution is symmetric, so the doubled tail equals the two-sided count.
        let p = wilcoxon_rank_sum(&a, &b).unwrap();
        assert!((p - extreme as f64 / total as f64).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_identical_groups() {
        let v = [1.0, 5.0, 2.0, 2.0, 7.0];
        assert_eq!(wilcoxon_rank_sum(&v, &v).unwrap(), 1.0);
        assert_eq!(wilcoxon_rank_sum(&[3.0; 6], &[3.0; 4]).unwrap(), 1.0);
        assert!(wilcoxon_rank_sum(&[], &[1.0]).is_err());
    }

    #[test]
    fn wilcoxon_normal_matches_permutation() {
        let mut rng = substream(2024, Purpose::Generate, 0);
        for inst in 0..10 {
            let a: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
            let p = wilcoxon_rank_sum(&a, &b).unwrap();
            let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
            let observed = rank_sum_stat(&a, &b);
            let mean = 30.0 * 61.0 / 2.0;
            let draws = 100_000;
            let mut hits = 0;
            let mut prng = substream(inst, Purpose::Permute, 0);
            let ranks_of = average_ranks(&pooled);
            let mut ranks = ranks_of.clone();
            for _ in 0..draws {
                ranks.shuffle(&mut prng);
                let s: f64 = ranks[..30].iter().sum();
                if (s - mean).abs() >= (observed - mean).abs() - 1e-9 {
                    hits += 1;
                }
            }
            pooled.clear();
            let mc = hits as f64 / draws as f64;
            assert!((p - mc).abs() <= 0.02, "instance {inst}: normal {p} vs permutation {mc}");
        }
    }

    fn blob_matrix(seed: u64) -> (CountMatrix, Vec<u8>) {
        let mut rng = substream(seed, Purpose::Generate, 0);
        let n = 40;
        let truth: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        let cols = (0..5)
            .map(|_| {
                truth
                    .iter()
                    .map(|&t| {
                        let mean = if t == 1 { 2000.0 } else { 2.0 };
                        Poisson::new(mean).unwrap().sample(&mut rng) as u64
                    })
                    .collect()
            })
            .collect();
        (CountMatrix::from_columns(n, cols).unwrap(), truth)
    }

    #[test]
    fn clustering_recovers_separated_blobs() {
        for seed in 0..5 {
            let (w, truth) = blob_matrix(seed);
            let labels = cluster_null(&w, seed).unwrap();
            let agree = labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
            assert!(agree == truth.len() || agree == 0, "seed {seed}");
            assert_eq!(labels[0], 0);
            assert_eq!(labels, cluster_null(&w, seed).unwrap());
        }
    }

    #[test]
    fn clustering_identical_rows() {
        let w = CountMatrix::from_rows(&vec![vec![3, 0, 1]; 4]).unwrap();
        let labels = cluster_null(&w, 1).unwrap();
        assert_eq!(labels, vec![0, 1, 0, 1]);
        assert!(cluster_null(&CountMatrix::from_rows(&vec![vec![1]; 3]).unwrap(), 0).is_err());
    }

    #[test]
    fn clustering_both_labels_present() {
        let mut rng = substream(4, Purpose::Generate, 0);
        for _ in 0..10 {
            let rows: Vec<Vec<u64>> = (0..12).map(|_| (0..4).map(|_| rng.random_range(0..5)).collect()).collect();
            let labels = cluster_null(&CountMatrix::from_rows(&rows).unwrap(), 3).unwrap();
            assert!(labels.contains(&0) && labels.contains(&1));
        }
    }

    #[test]
    fn de_scores_basics() {
        // A constant feature has p = 1 and therefore score 0.
        let w = CountMatrix::from_columns(6, vec![vec![2; 6], vec![0, 1, 2, 10, 11, 12]]).unwrap();
        let y = [0, 0, 0, 1, 1, 1];
        let s = de_scores(&w, &y).unwrap();
        assert_eq!(s[0], 0.0);
        // Exact p for complete separation with 3 vs 3 is 2/20.
        assert!((s[1] - (-(0.1f64).log10())).abs() < 1e-12);
        assert!(de_stats(&w, &w, &[1; 6], NullLabels::Cluster, 0).is_err());
        let st = de_stats(&w, &w, &y, NullLabels::Outcome, 0).unwrap();
        assert_eq!(st.z, st.z_tilde);
    }

    fn noise_matrix(rng: &mut Rng, n: usize, p: usize) -> CountMatrix {
        let cols = (0..p).map(|_| (0..n).map(|_| Poisson::new(3.0).unwrap().sample(rng) as u64).collect()).collect();
        CountMatrix::from_columns(n, cols).unwrap()
    }

    #[test]
    fn lasso_objective_decreases_per_sweep() {
        for seed in 0..10u64 {
            let mut rng = substream(seed, Purpose::Generate, 0);
            let n = 60;
            let w = noise_matrix(&mut rng, n, 8);
            let wt = noise_matrix(&mut rng, n, 8);
            let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let design = glm_design(&w, &wt);
            let order: Vec<usize> = (0..16).collect();
            let mut fit = Lasso::new(&design, (0..n).collect(), &y, &order);
            let lam = 0.05 * fit.lambda_max();
            let mut prev = fit.objective(lam);
            for _ in 0..50 {
                fit.sweep(lam, false);
                let obj = fit.objective(lam);
                assert!(obj <= prev + 1e-12, "seed {seed}: {obj} > {prev}");
                prev = obj;
            }
        }
    }

    #[test]
    fn lasso_zero_at_lambda_max() {
        let mut rng = substream(7, Purpose::Generate, 0);
        let n = 50;
        let w = noise_matrix(&mut rng, n, 5);
        let wt = noise_matrix(&mut rng, n, 5);
        let y: Vec<u8> = (0..n).map(|i| u8::from(i < 25)).collect();
        let design = glm_design(&w, &wt);
        let order: Vec<usize> = (0..10).collect();
        let mut fit = Lasso::new(&design, (0..n).collect(), &y, &order);
        let lmax = fit.lambda_max();
        fit.solve(lmax, &GlmConfig::default());
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        fit.solve(0.5 * lmax, &GlmConfig::default());
        assert!(fit.beta.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn glm_detects_noiseless_signal() {
        let mut pass = 0;
        for seed in 0..20u64 {
            let mut rng = substream(seed, Purpose::Generate, 3);
            let n = 100;
            let y: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
            let mut cols: Vec<Vec<u64>> = (0..9).map(|_| (0..n).map(|_| Poisson::new(3.0).unwrap().sample(&mut rng) as u64).collect()).collect();
            cols.insert(0, y.iter().map(|&v| 1 + 4 * v as u64).collect());
            let w = CountMatrix::from_columns(n, cols).unwrap();
            let wt = noise_matrix(&mut rng, n, 10);
            let st = glm_stats(&w, &wt, &y, &GlmConfig::default(), seed).unwrap();
            if st.z[0] > st.z_tilde[0] {
                pass += 1;
            }
        }
        assert!(pass >= 18, "{pass}/20");
    }

    #[test]
    fn glm_swap_symmetry_is_exact() {
        let mut rng = substream(11, Purpose::Generate, 0);
        let n = 80;
        let p = 6;
        let y: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
        let mut wcols: Vec<Vec<u64>> = (0..p).map(|_| (0..n).map(|_| Poisson::new(4.0).unwrap().sample(&mut rng) as u64).collect()).collect();
        wcols[1] = y.iter().map(|&v| Poisson::new(2.0 + 3.0 * v as f64).unwrap().sample(&mut rng) as u64).collect();
        let tcols: Vec<Vec<u64>> = (0..p).map(|_| (0..n).map(|_| Poisson::new(4.0).unwrap().sample(&mut rng) as u64).collect()).collect();
        let w = CountMatrix::from_columns(n, wcols.clone()).unwrap();
        let wt = CountMatrix::from_columns(n, tcols.clone()).unwrap();
        let mut perm: Vec<usize> = (0..2 * p).collect();
        perm.shuffle(&mut rng);
        let cfg = GlmConfig::default();
        let a = glm_stats_with_permutation(&w, &wt, &y, &cfg, &perm, 5).unwrap();
        for j in 0..p {
            let (mut sw, mut st) = (wcols.clone(), tcols.clone());
            std::mem::swap(&mut sw[j], &mut st[j]);
            // Conjugate the coordinate order by the transposition (j, j+p).
            let tau = |c: usize| if c == j { j + p } else if c == j + p { j } else { c };
            let perm2: Vec<usize> = perm.iter().map(|&c| tau(c)).collect();
            let b = glm_stats_with_permutation(
                &CountMatrix::from_columns(n, sw).unwrap(),
                &CountMatrix::from_columns(n, st).unwrap(),
                &y,
                &cfg,
                &perm2,
                5,
            )
            .unwrap();
            assert_eq!(a.z[j], b.z_tilde[j]);
            assert_eq!(a.z_tilde[j], b.z[j]);
            for k in (0..p).filter(|&k| k != j) {
                assert_eq!(a.z[k], b.z[k]);
                assert_eq!(a.z_tilde[k], b.z_tilde[k]);
            }
        }
    }

    #[test]
    fn glm_rejects_bad_inputs() {
        let w = CountMatrix::from_columns(10, vec![vec![1; 10]]).unwrap();
        assert!(glm_stats(&w, &w, &[0; 10], &GlmConfig::default(), 0).is_err());
        assert!(glm_stats(&w, &w, &[2; 10], &GlmConfig::default(), 0).is_err());
        let y: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let bad = [0, 0];
        assert!(glm_stats_with_permutation(&w, &w, &y, &GlmConfig::default(), &bad, 0).is_err());
    }
}
