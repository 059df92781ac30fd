//! Multi-source simulation and selection scoring.
//!
//! Every feature follows a ZIPG law with log links `β₀ = β₀* = 1`; signal
//! features add covariate effects `β = β* = 0.1` and, crucially, a
//! zero-inflation probability that differs between the two outcome groups.
//! Features whose zero-inflation is at most 0.8 can be tied together by a
//! Gaussian copula with AR(1) correlation `0.5^|i−j|`.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, norm_cdf};
use crate::matrix::{depths_from_counts, CountMatrix, Matrix, SourceData};
use crate::rng::{derive_seed, substream, Purpose, Rng};
use crate::zipg::dist::quantile_unchecked;

/// Zero-inflation above this is sampled outside the copula.
pub const COPULA_PI_MAX: f64 = 0.8;
/// Cap on the second group's zero-inflation.
const PI_CAP: f64 = 0.99;
const COPULA_RHO: f64 = 0.5;
const COVARIATE_RHO: f64 = 0.1;
const INTERCEPT: f64 = 1.0;
const SIGNAL_COEF: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k_sources: usize,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub signal_frac: f64,
    pub max_zero_prop: f64,
    pub diff: usize,
    pub delta_pi: f64,
    pub copula: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { k_sources: 2, n: 400, p: 200, d: 1, signal_frac: 0.1, max_zero_prop: 0.8, diff: 0, delta_pi: 0.3, copula: true, seed: 0 }
    }
}

impl SimConfig {
    /// Number of signal features per source.
    pub fn n_signals(&self) -> usize {
        (self.p as f64 * self.signal_frac).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_sources == 0 || self.p == 0 || self.d == 0 {
            return Err(Error::Config("K, p and d must be positive".into()));
        }
        if self.n < 4 || self.n % 2 != 0 {
            return Err(Error::Config(format!("n must be even and at least 4, got {}", self.n)));
        }
        if !(self.signal_frac > 0.0 && self.signal_frac < 1.0) {
            return Err(Error::Config(format!("signal_frac must lie in (0, 1), got {}", self.signal_frac)));
        }
        if !(self.max_zero_prop >= 0.0 && self.max_zero_prop < 1.0) {
            return Err(Error::Config(format!("max_zero_prop must lie in [0, 1), got {}", self.max_zero_prop)));
        }
        if !(self.delta_pi >= 0.0 && self.delta_pi < 1.0) {
            return Err(Error::Config(format!("delta_pi must lie in [0, 1), got {}", self.delta_pi)));
        }
        let s = self.n_signals();
        if self.diff > s {
            return Err(Error::Config(format!("diff = {} exceeds the {s} signals per source", self.diff)));
        }
        if s - self.diff + self.k_sources * self.diff > self.p {
            return Err(Error::Config(format!(
                "diff = {} needs {} signal slots but p = {}",
                self.diff,
                s - self.diff + self.k_sources * self.diff,
                self.p
            )));
        }
        Ok(())
    }

    /// Signal indices of source `k`: the common block followed by a
    /// source-exclusive block of `diff` indices.
    pub fn signal_set(&self, k: usize) -> Vec<usize> {
        let common = self.n_signals() - self.diff;
        let start = common + k * self.diff;
        (0..common).chain(start..start + self.diff).collect()
    }

    pub fn common_signals(&self) -> Vec<usize> {
        (0..self.n_signals() - self.diff).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimDataset {
    pub sources: Vec<SourceData>,
    pub signal_sets: Vec<Vec<usize>>,
    /// Features associated with the outcome in every source.
    pub common_signals: Vec<usize>,
    pub config: SimConfig,
}

/// Rows i.i.d. `N_d(0, Σ)` with `Σᵢⱼ = 0.1^|i−j|`.
pub fn gen_covariates(n: usize, d: usize, rng: &mut Rng) -> Result<Matrix> {
    let sigma = DMatrix::from_fn(d, d, |i, j| COVARIATE_RHO.powi((i as i32 - j as i32).abs()));
    let l = cholesky_lower(&sigma)?;
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        let e: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for a in 0..d {
            let v: f64 = (0..=a).map(|b| l[(a, b)] * e[b]).sum();
            x.set(i, a, v);
        }
    }
    Ok(x)
}

/// Per-feature generating law in one source.
struct FeatureLaw {
    signal: bool,
    /// Zero-inflation for outcome groups 0 and 1.
    pi: [f64; 2],
}

impl FeatureLaw {
    fn link(&self, x: &[f64]) -> (f64, f64) {
        let coef = if self.signal { SIGNAL_COEF } else { 0.0 };
        let xb: f64 = x.iter().map(|v| v * coef).sum();
        ((INTERCEPT + xb).exp(), (INTERCEPT + xb).exp())
    }
}

fn draw_direct(rng: &mut Rng, lambda: f64, theta: f64, pi: f64) -> u64 {
    if rng.random::<f64>() < pi {
        return 0;
    }
    let g = Gamma::new(1.0 / theta, lambda * theta).expect("valid gamma").sample(rng);
    if g > 0.0 {
        Poisson::new(g).map(|d| d.sample(rng) as u64).unwrap_or(0)
    } else {
        0
    }
}

fn gen_source(cfg: &SimConfig, k: usize) -> Result<(SourceData, Vec<usize>)> {
    let seed = derive_seed(cfg.seed, Purpose::Source, k as u64);
    let (n, p) = (cfg.n, cfg.p);
    let signals = cfg.signal_set(k);
    let mut is_signal = vec![false; p];
    signals.iter().for_each(|&j| is_signal[j] = true);

    let x = gen_covariates(n, cfg.d, &mut substream(seed, Purpose::Covariates, 0))?;
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
    let mut zrng = substream(seed, Purpose::ZeroInflation, 0);
    let laws: Vec<FeatureLaw> = (0..p)
        .map(|j| {
            let pi1 = zrng.random::<f64>() * cfg.max_zero_prop;
            let pi2 = if is_signal[j] { (pi1 + cfg.delta_pi).min(PI_CAP) } else { pi1 };
            FeatureLaw { signal: is_signal[j], pi: [pi1, pi2] }
        })
        .collect();

    let rows = x.rows();
    let mut cols: Vec<Vec<u64>> = vec![Vec::new(); p];
    let in_copula: Vec<usize> = if cfg.copula { (0..p).filter(|&j| laws[j].pi[0] <= COPULA_PI_MAX).collect() } else { Vec::new() };
    if !in_copula.is_empty() {
        let m = in_copula.len();
        let r = DMatrix::from_fn(m, m, |a, b| COPULA_RHO.powi((in_copula[a] as i32 - in_copula[b] as i32).abs()));
        let l = cholesky_lower(&r)?;
        let mut rng = substream(seed, Purpose::Generate, 0);
        let eps = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let latent = eps * l.transpose();
        for (a, &j) in in_copula.iter().enumerate() {
            cols[j] = (0..n)
                .map(|i| {
                    let (lambda, theta) = laws[j].link(&rows[i]);
                    let u = norm_cdf(latent[(i, a)]).min(1.0 - f64::EPSILON);
                    quantile_unchecked(u, lambda, theta, laws[j].pi[labels[i] as usize])
                })
                .collect::<Result<_>>()?;
        }
    }
    for j in 0..p {
        if cfg.copula && laws[j].pi[0] <= COPULA_PI_MAX {
            continue;
        }
        let mut rng = substream(seed, Purpose::Generate, 1 + j as u64);
        cols[j] = (0..n)
            .map(|i| {
                let (lambda, theta) = laws[j].link(&rows[i]);
                draw_direct(&mut rng, lambda, theta, laws[j].pi[labels[i] as usize])
            })
            .collect();
    }
    let counts = CountMatrix::from_columns(n, cols)?;
    let depths = depths_from_counts(&counts);
    Ok((SourceData { counts, labels, covariates: x, depths }, signals))
}

/// Generate all sources. Source `k` uses its own substreams, so adding
/// sources never changes earlier ones.
pub fn gen_multisource(cfg: &SimConfig) -> Result<SimDataset> {
    cfg.validate()?;
    let mut sources = Vec::with_capacity(cfg.k_sources);
    let mut signal_sets = Vec::with_capacity(cfg.k_sources);
    for k in 0..cfg.k_sources {
        let (s, sig) = gen_source(cfg, k)?;
        sources.push(s);
        signal_sets.push(sig);
    }
    let common_signals = signal_sets[0].iter().copied().filter(|j| signal_sets.iter().all(|s| s.contains(j))).collect();
    Ok(SimDataset { sources, signal_sets, common_signals, config: cfg.clone() })
}

/// False discovery proportion and power of a selection.
pub fn evaluate(selected: &[usize], truth: &[usize], p: usize) -> Result<(f64, f64)> {
    if let Some(j) = selected.iter().chain(truth).find(|&&j| j >= p) {
        return Err(Error::Dimension(format!("index {j} outside 0..{p}")));
    }
    let hits = selected.iter().filter(|j| truth.contains(j)).count() as f64;
    let fdp = (selected.len() as f64 - hits) / (selected.len().max(1) as f64);
    let power = hits / (truth.len().max(1) as f64);
    Ok((fdp, power))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zipg::{em_fit, EmConfig};

    #[test]
    fn covariance_matches_sigma() {
        let mut pass = 0;
        for seed in 0..20 {
            let x = gen_covariates(5000, 3, &mut substream(seed, Purpose::Covariates, 0)).unwrap();
            let mut ok = true;
            for a in 0..3 {
                for b in 0..3 {
                    let cov = (0..5000).map(|i| x.get(i, a) * x.get(i, b)).sum::<f64>() / 5000.0;
                    ok &= (cov - 0.1f64.powi((a as i32 - b as i32).abs())).abs() <= 0.05;
                }
            }
            pass += usize::from(ok);
        }
        assert!(pass >= 18, "{pass}/20");
    }

    #[test]
    fn signal_sets_and_shapes() {
        let cfg = SimConfig { n: 40, p: 200, seed: 3, ..Default::default() };
        let ds = gen_multisource(&cfg).unwrap();
        assert_eq!(cfg.n_signals(), 20);
        assert_eq!(ds.signal_sets[0], ds.signal_sets[1]);
        assert_eq!(ds.common_signals, (0..20).collect::<Vec<_>>());
        assert_eq!(ds.sources.len(), 2);
        let s = &ds.sources[0];
        assert_eq!((s.counts.nrows(), s.counts.ncols()), (40, 200));
        assert_eq!(s.labels.iter().filter(|&&y| y == 1).count(), 20);
        assert!(s.labels[..20].iter().all(|&y| y == 0));
        assert_eq!(s.depths, depths_from_counts(&s.counts));

        let d = SimConfig { diff: 10, ..cfg.clone() };
        let dd = gen_multisource(&d).unwrap();
        assert_eq!(dd.common_signals, (0..10).collect::<Vec<_>>());
        assert_eq!(dd.signal_sets[0][10..], (10..20).collect::<Vec<_>>()[..]);
        assert_eq!(dd.signal_sets[1][10..], (20..30).collect::<Vec<_>>()[..]);
        assert!(SimConfig { diff: 21, ..cfg.clone() }.validate().is_err());
        assert!(SimConfig { n: 41, ..cfg.clone() }.validate().is_err());
    }

    #[test]
    fn deterministic() {
        let cfg = SimConfig { n: 20, p: 30, seed: 9, ..Default::default() };
        let a = gen_multisource(&cfg).unwrap();
        let b = gen_multisource(&cfg).unwrap();
        assert_eq!(a.sources[1].counts, b.sources[1].counts);
        let c = gen_multisource(&SimConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.sources[1].counts, c.sources[1].counts);
    }

    #[test]
    fn zero_rate_at_least_inflation() {
        // Null features: observed zero rate ≥ π because PG adds its own zeros.
        for copula in [true, false] {
            let cfg = SimConfig { k_sources: 1, n: 4000, p: 20, copula, seed: 5, ..Default::default() };
            let ds = gen_multisource(&cfg).unwrap();
            let mut zrng = substream(derive_seed(cfg.seed, Purpose::Source, 0), Purpose::ZeroInflation, 0);
            for j in 0..cfg.p {
                let pi: f64 = zrng.random::<f64>() * cfg.max_zero_prop;
                if j < cfg.n_signals() {
                    continue;
                }
                let rate = ds.sources[0].counts.col(j).iter().filter(|&&v| v == 0).count() as f64 / 4000.0;
                assert!(rate >= pi, "feature {j}: zero rate {rate} < π {pi}");
            }
        }
    }

    #[test]
    fn signal_groups_differ_by_delta_pi() {
        // Refit each outcome group: the estimated zero-inflation gap recovers delta_pi.
        let cfg = SimConfig { k_sources: 1, n: 4000, p: 20, signal_frac: 0.1, max_zero_prop: 0.5, seed: 8, ..Default::default() };
        let ds = gen_multisource(&cfg).unwrap();
        let s = &ds.sources[0];
        let mut gaps = Vec::new();
        for j in 0..cfg.n_signals() {
            let mut pis = [0.0; 2];
            for g in 0..2u8 {
                let idx: Vec<usize> = (0..cfg.n).filter(|&i| s.labels[i] == g).collect();
                let w: Vec<u64> = idx.iter().map(|&i| s.counts.get(i, j)).collect();
                let x = s.covariates.select_rows(&idx);
                let fit = em_fit(&w, &x, &vec![1.0; idx.len()], &EmConfig::default()).unwrap();
                pis[g as usize] = fit.params.pi();
            }
            gaps.push(pis[1] - pis[0]);
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!((mean - 0.3).abs() < 0.06, "gaps {gaps:?}");
    }

    #[test]
    fn evaluate_cases() {
        assert_eq!(evaluate(&[1, 2], &[1, 2], 5).unwrap(), (0.0, 1.0));
        assert_eq!(evaluate(&[], &[1, 2], 5).unwrap(), (0.0, 0.0));
        let (fdp, power) = evaluate(&[1, 2, 3], &[1, 2, 4, 5], 6).unwrap();
        assert!((fdp - 1.0 / 3.0).abs() < 1e-15 && (power - 0.5).abs() < 1e-15);
        assert!(evaluate(&[7], &[], 5).is_err());
    }
}
