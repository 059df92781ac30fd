//! EM maximum likelihood for a single ZIPG feature.
//!
//! The latent indicator `zᵢ` marks structural zeros. Given soft indicators,
//! the expected complete-data log-likelihood separates into a closed-form
//! update for `γ` and a smooth problem in the two link models, solved by
//! BFGS with the analytic gradient. The BFGS inverse-Hessian estimate is
//! carried across EM iterations, so later M-steps start close to Newton.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dist::{log_pmf_unchecked, pg_log_pmf};
use super::params::{clamp_gamma, logistic, logit, predictors, ZipgParams, EXPONENT_CLAMP, GAMMA_CLAMP};
use super::special::{digamma_diff, ln_factorial, ln_gamma_ratio};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Maximum EM iterations.
    pub t_max: usize,
    /// Relative change of the complete-data log-likelihood that ends the loop.
    pub eps_tol: f64,
    /// BFGS iterations per M-step.
    pub inner_max_iter: usize,
    /// BFGS gradient-norm stop.
    pub grad_tol: f64,
    /// Iterations of the zero-inflated Poisson fit used for initialization.
    pub init_iters: usize,
    /// Squared extrapolation between EM maps.
    pub accelerate: bool,
}

const SQUAREM_MAX_STEP: f64 = 64.0;

impl Default for EmConfig {
    fn default() -> Self {
        Self { t_max: 100, eps_tol: 1e-6, inner_max_iter: 50, grad_tol: 1e-6, init_iters: 25, accelerate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ZipgParams,
    /// Observed-data log-likelihood at the initial point and after every EM iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// All-zero feature or fewer than three distinct values; EM was skipped.
    pub degenerate: bool,
}

/// Per-feature view with the quantities that do not depend on the parameters.
struct Feature<'a> {
    w: &'a [u64],
    /// Row-major n × d.
    x: Vec<f64>,
    d: usize,
    log_depth: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl<'a> Feature<'a> {
    fn new(w: &'a [u64], x: &Matrix, depths: &[f64]) -> Result<Self> {
        let n = w.len();
        if x.nrows() != n || depths.len() != n {
            return Err(Error::Dimension(format!(
                "{n} counts, {} covariate rows, {} depths",
                x.nrows(),
                depths.len()
            )));
        }
        if let Some(d) = depths.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Domain(format!("depth must be positive, got {d}")));
        }
        let d = x.ncols();
        let mut rows = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                let v = x.get(i, j);
                if !v.is_finite() {
                    return Err(Error::Domain("non-finite covariate".into()));
                }
                rows.push(v);
            }
        }
        Ok(Self {
            w,
            x: rows,
            d,
            log_depth: depths.iter().map(|m| m.ln()).collect(),
            ln_fact: w.iter().map(|&v| ln_factorial(v)).collect(),
        })
    }

    fn n(&self) -> usize {
        self.w.len()
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn check_params(&self, p: &ZipgParams) -> Result<()> {
        if p.dim() != self.d {
            return Err(Error::Dimension(format!("parameters have d = {}, covariates d = {}", p.dim(), self.d)));
        }
        if !p.is_finite() {
            return Err(Error::Domain("non-finite parameters".into()));
        }
        Ok(())
    }

    /// (λᵢ, θᵢ, ∂λ active, ∂θ active)
    #[inline]
    fn link(&self, p: &ZipgParams, i: usize) -> (f64, f64, bool, bool) {
        let (eta, eta_star) = predictors(p, self.row(i), self.log_depth[i]);
        let ce = eta.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP);
        let cs = eta_star.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP);
        (ce.exp(), cs.exp(), ce == eta, cs == eta_star)
    }

    fn observed(&self, p: &ZipgParams) -> f64 {
        let pi = p.pi();
        (0..self.n())
            .map(|i| {
                let (l, t, _, _) = self.link(p, i);
                log_pmf_unchecked(self.w[i], l, t, pi)
            })
            .sum()
    }

    fn e_step(&self, p: &ZipgParams) -> Vec<f64> {
        let pi = p.pi();
        (0..self.n())
            .map(|i| {
                if self.w[i] > 0 || pi == 0.0 {
                    return 0.0;
                }
                let (l, t, _, _) = self.link(p, i);
                let p0 = pg_log_pmf(0, l, t).exp();
                pi / (pi + p0 * (1.0 - pi))
            })
            .collect()
    }

    /// Σᵢ zᵢ log π + (1 - zᵢ) log(1 - π).
    fn mixing_part(z: &[f64], gamma: f64) -> f64 {
        let log_pi = -softplus(-gamma);
        let log_1m = -softplus(gamma);
        z.iter().map(|&zi| zi * log_pi + (1.0 - zi) * log_1m).sum()
    }

    #[inline]
    fn pg_log_pmf_at(&self, i: usize, lambda: f64, theta: f64) -> (f64, f64) {
        let w = self.w[i];
        let r = 1.0 / theta;
        let a = lambda * theta;
        let l1p = a.ln_1p();
        if w == 0 {
            return (-r * l1p, l1p);
        }
        let v = ln_gamma_ratio(w, r) - self.ln_fact[i] + w as f64 * (a.ln() - l1p) - r * l1p;
        (v, l1p)
    }

    /// Σᵢ (1 - zᵢ) log P_PG(wᵢ) and, optionally, its gradient in `[β₀, β, β₀*, β*]`.
    fn pg_part(&self, p: &ZipgParams, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let d = self.d;
        let mut value = 0.0;
        match grad {
            None => {
                for i in 0..self.n() {
                    let v = 1.0 - z[i];
                    if v == 0.0 {
                        continue;
                    }
                    let (l, t, _, _) = self.link(p, i);
                    value += v * self.pg_log_pmf_at(i, l, t).0;
                }
            }
            Some(g) => {
                g.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..self.n() {
                    let v = 1.0 - z[i];
                    if v == 0.0 {
                        continue;
                    }
                    let w = self.w[i];
                    let (l, t, act_mean, act_disp) = self.link(p, i);
                    let (lp, l1p) = self.pg_log_pmf_at(i, l, t);
                    value += v * lp;
                    let wf = w as f64;
                    let r = 1.0 / t;
                    let a = l * t;
                    let d_eta = if act_mean { v * (wf - l) / (1.0 + a) } else { 0.0 };
                    let d_eta_star = if act_disp {
                        v * (-r * digamma_diff(w, r) + r * l1p - (l - wf) / (1.0 + a))
                    } else {
                        0.0
                    };
                    let x = self.row(i);
                    g[0] += d_eta;
                    g[d + 1] += d_eta_star;
                    for k in 0..d {
                        g[1 + k] += d_eta * x[k];
                        g[d + 2 + k] += d_eta_star * x[k];
                    }
                }
            }
        }
        value
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn with_pg_block(p: &ZipgParams, block: &[f64]) -> ZipgParams {
    let mut v = block.to_vec();
    v.push(p.gamma);
    ZipgParams::from_vec(p.dim(), &v).expect("block length matches dimension")
}

fn pg_block(p: &ZipgParams) -> Vec<f64> {
    let mut v = p.to_vec();
    v.pop();
    v
}

/// Observed-data log-likelihood `Σᵢ log P_ZIPG(wᵢ)`.
pub fn observed_loglik(params: &ZipgParams, w: &[u64], x: &Matrix, depths: &[f64]) -> Result<f64> {
    let f = Feature::new(w, x, depths)?;
    f.check_params(params)?;
    Ok(f.observed(params))
}

/// Posterior probability that each observation is a structural zero.
pub fn e_step(params: &ZipgParams, w: &[u64], x: &Matrix, depths: &[f64]) -> Result<Vec<f64>> {
    let f = Feature::new(w, x, depths)?;
    f.check_params(params)?;
    Ok(f.e_step(params))
}

fn check_z(z: &[f64], n: usize) -> Result<()> {
    if z.len() != n {
        return Err(Error::Dimension(format!("{} latent weights for {n} observations", z.len())));
    }
    if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain("latent weights must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Complete-data log-likelihood `L(Ω | W, z)`; with soft `z` this is the
/// M-step objective `Q(Ω | Ω⁽ᵗ⁾)`.
pub fn complete_loglik(params: &ZipgParams, z: &[f64], w: &[u64], x: &Matrix, depths: &[f64]) -> Result<f64> {
    let f = Feature::new(w, x, depths)?;
    f.check_params(params)?;
    check_z(z, f.n())?;
    Ok(Feature::mixing_part(z, params.gamma) + f.pg_part(params, z, None))
}

/// Analytic gradient of `complete_loglik` in the flat layout `[β₀, β, β₀*, β*, γ]`.
pub fn q_gradient(params: &ZipgParams, z: &[f64], w: &[u64], x: &Matrix, depths: &[f64]) -> Result<Vec<f64>> {
    let f = Feature::new(w, x, depths)?;
    f.check_params(params)?;
    check_z(z, f.n())?;
    let mut g = vec![0.0; 2 * f.d + 3];
    f.pg_part(params, z, Some(&mut g[..2 * f.d + 2]));
    let sz: f64 = z.iter().sum();
    g[2 * f.d + 2] = sz - f.n() as f64 * params.pi();
    Ok(g)
}

/// All zeros, or fewer than three distinct values.
pub fn is_degenerate(w: &[u64]) -> bool {
    let mut distinct: Vec<u64> = Vec::with_capacity(3);
    for &v in w {
        if !distinct.contains(&v) {
            distinct.push(v);
            if distinct.len() >= 3 {
                return false;
            }
        }
    }
    true
}

fn zero_fraction_gamma(w: &[u64]) -> f64 {
    let n = w.len() as f64;
    let frac = w.iter().filter(|&&v| v == 0).count() as f64 / n;
    clamp_gamma(logit(frac.clamp(1.0 / n, 1.0 - 1.0 / n)))
}

fn degenerate_params(f: &Feature<'_>) -> ZipgParams {
    let n = f.n() as f64;
    let mean = f.w.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mean_log_depth = f.log_depth.iter().sum::<f64>() / n;
    ZipgParams::new(f.d, (mean + 0.5).ln() - mean_log_depth, 0.0, zero_fraction_gamma(f.w))
}

/// Starting point: zero-inflated Poisson fit of the mean model (`θ` held at 1,
/// `β* = 0`), then `π` reset to the observed zero fraction.
pub fn init_params(w: &[u64], x: &Matrix, depths: &[f64]) -> Result<ZipgParams> {
    init_with(&Feature::new(w, x, depths)?, EmConfig::default().init_iters)
}

fn init_with(f: &Feature<'_>, iters: usize) -> Result<ZipgParams> {
    let n = f.n();
    let d = f.d;
    if n < 2 * d + 2 {
        return Err(Error::Data(format!("need at least {} observations for d = {d}, got {n}", 2 * d + 2)));
    }
    if is_degenerate(f.w) {
        return Ok(degenerate_params(f));
    }
    let k = d + 1;
    let nf = n as f64;
    let mean_w = f.w.iter().map(|&v| v as f64).sum::<f64>() / nf;
    let mean_log_depth = f.log_depth.iter().sum::<f64>() / nf;
    let zero_frac = f.w.iter().filter(|&&v| v == 0).count() as f64 / nf;
    let mut pi = zero_frac.clamp(1.0 / nf, 1.0 - 1.0 / nf) * 0.5;
    let mut coef = DVector::<f64>::zeros(k);
    coef[0] = (mean_w / (1.0 - pi)).ln() - mean_log_depth;
    let mut z = vec![0.0; n];

    let eta = |coef: &DVector<f64>, i: usize| -> f64 {
        let mut e = coef[0] + f.log_depth[i];
        for (c, xv) in coef.iter().skip(1).zip(f.row(i)) {
            e += c * xv;
        }
        e.clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP)
    };
    let poisson_obj = |coef: &DVector<f64>, z: &[f64]| -> f64 {
        (0..n).map(|i| (1.0 - z[i]) * (f.w[i] as f64 * eta(coef, i) - eta(coef, i).exp())).sum()
    };

    for _ in 0..iters {
        for i in 0..n {
            z[i] = if f.w[i] == 0 {
                let mu = eta(&coef, i).exp();
                pi / (pi + (1.0 - pi) * (-mu).exp())
            } else {
                0.0
            };
        }
        pi = (z.iter().sum::<f64>() / nf).clamp(1.0 / nf, 1.0 - 1.0 / nf);
        // Two damped Newton steps of the weighted Poisson regression.
        for _ in 0..2 {
            let mut grad = DVector::<f64>::zeros(k);
            let mut hess = DMatrix::<f64>::zeros(k, k);
            for i in 0..n {
                let v = 1.0 - z[i];
                let mu = eta(&coef, i).exp();
                let xi = f.row(i);
                let xt = |a: usize| if a == 0 { 1.0 } else { xi[a - 1] };
                for a in 0..k {
                    grad[a] += v * (f.w[i] as f64 - mu) * xt(a);
                    for b in 0..=a {
                        hess[(a, b)] += v * mu * xt(a) * xt(b);
                    }
                }
            }
            for a in 0..k {
                for b in 0..a {
                    hess[(b, a)] = hess[(a, b)];
                }
                hess[(a, a)] += 1e-8;
            }
            let Some(step) = hess.cholesky().map(|c| c.solve(&grad)) else { break };
            let base = poisson_obj(&coef, &z);
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand = &coef + &step * scale;
                if poisson_obj(&cand, &z) >= base {
                    coef = cand;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }

    let mut params = ZipgParams::new(d, coef[0], 0.0, zero_fraction_gamma(f.w));
    params.beta.copy_from_slice(&coef.as_slice()[1..]);
    if !params.is_finite() {
        return Ok(degenerate_params(f));
    }
    Ok(params)
}

/// BFGS state shared across M-steps of one fit.
struct Bfgs {
    h: Option<DMatrix<f64>>,
}

impl Bfgs {
    /// Minimize `obj` from `x0`; returns the final point. The objective never increases.
    fn minimize<F>(&mut self, x0: Vec<f64>, max_iter: usize, grad_tol: f64, mut obj: F) -> Vec<f64>
    where
        F: FnMut(&[f64], &mut [f64]) -> f64,
    {
        let m = x0.len();
        let mut x = DVector::from_vec(x0);
        let mut g = DVector::<f64>::zeros(m);
        let mut fx = obj(x.as_slice(), g.as_mut_slice());
        let mut fresh = self.h.is_none();
        let mut h = self.h.take().unwrap_or_else(|| DMatrix::identity(m, m));
        let mut xn = DVector::<f64>::zeros(m);
        let mut gn = DVector::<f64>::zeros(m);
        for _ in 0..max_iter {
            if !fx.is_finite() || g.norm() < grad_tol {
                break;
            }
            let mut dir = -(&h * &g);
            let mut slope = dir.dot(&g);
            if !(slope < 0.0) {
                h = DMatrix::identity(m, m);
                fresh = true;
                dir = -g.clone();
                slope = -g.norm_squared();
            }
            let mut step = if fresh { (1.0 / g.norm()).min(1.0) } else { 1.0 };
            let mut accepted = false;
            for _ in 0..50 {
                xn.copy_from(&(&x + &dir * step));
                let fnew = obj(xn.as_slice(), gn.as_mut_slice());
                if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                    accepted = true;
                    let s = &xn - &x;
                    let y = &gn - &g;
                    let sy = s.dot(&y);
                    if sy > 1e-12 * s.norm() * y.norm() {
                        if fresh {
                            h = DMatrix::identity(m, m) * (sy / y.norm_squared());
                            fresh = false;
                        }
                        let rho = 1.0 / sy;
                        let hy = &h * &y;
                        let yhy = y.dot(&hy);
                        // H⁺ = H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
                        h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
                        h += (&s * s.transpose()) * (rho * rho * yhy + rho);
                    }
                    let df = fx - fnew;
                    x.copy_from(&xn);
                    g.copy_from(&gn);
                    fx = fnew;
                    if df <= 1e-14 * fx.abs().max(1.0) {
                        self.h = Some(h);
                        return x.as_slice().to_vec();
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // No descent at working precision; drop the curvature estimate.
                self.h = None;
                return x.as_slice().to_vec();
            }
        }
        self.h = Some(h);
        x.as_slice().to_vec()
    }
}

fn m_step(f: &Feature<'_>, p: &ZipgParams, z: &[f64], cfg: &EmConfig, bfgs: &mut Bfgs) -> ZipgParams {
    let n = f.n() as f64;
    let mean_z = z.iter().sum::<f64>() / n;
    let gamma = if mean_z <= logistic(-GAMMA_CLAMP) {
        -GAMMA_CLAMP
    } else if mean_z >= logistic(GAMMA_CLAMP) {
        GAMMA_CLAMP
    } else {
        logit(mean_z)
    };
    let start = pg_block(p);
    let block = bfgs.minimize(start, cfg.inner_max_iter, cfg.grad_tol, |v, g| {
        let cand = with_pg_block(p, v);
        let val = f.pg_part(&cand, z, Some(g));
        g.iter_mut().for_each(|x| *x = -*x);
        -val
    });
    let mut out = with_pg_block(p, &block);
    out.gamma = clamp_gamma(gamma);
    out
}

/// One EM map: E-step at `params`, then M-step. Returns the new parameters
/// and the complete-data log-likelihood at the maximizer.
fn em_map(f: &Feature<'_>, params: &ZipgParams, cfg: &EmConfig, bfgs: &mut Bfgs) -> (ZipgParams, f64) {
    let z = f.e_step(params);
    let next = m_step(f, params, &z, cfg, bfgs);
    let l = Feature::mixing_part(&z, next.gamma) + f.pg_part(&next, &z, None);
    (next, l)
}

fn relative_change(current: f64, prev: f64) -> f64 {
    ((current - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs()
}

/// Fit one feature by EM.
///
/// Convergence is declared when the relative change of the complete-data
/// log-likelihood `L(Ω⁽ᵗ⁾ | W, z⁽ᵗ⁻¹⁾)` between iterations falls below
/// `eps_tol`. With `accelerate`, each cycle applies two EM maps, a squared
/// extrapolation and one stabilizing map; the extrapolated point is kept
/// only when its observed log-likelihood is at least that of the plain EM
/// iterate, so the trace stays monotone.
pub fn em_fit(w: &[u64], x: &Matrix, depths: &[f64], cfg: &EmConfig) -> Result<FitReport> {
    let f = Feature::new(w, x, depths)?;
    let n = f.n();
    if n <= 2 * f.d + 2 {
        return Err(Error::Data(format!("need more than {} observations for d = {}, got {n}", 2 * f.d + 2, f.d)));
    }
    if is_degenerate(w) {
        let params = degenerate_params(&f);
        let ll = f.observed(&params);
        return Ok(FitReport { params, loglik_trace: vec![ll], iterations: 0, converged: true, degenerate: true });
    }

    let mut params = init_with(&f, cfg.init_iters)?;
    let z0 = f.e_step(&params);
    let mut prev = Feature::mixing_part(&z0, params.gamma) + f.pg_part(&params, &z0, None);
    let mut observed = f.observed(&params);
    let mut trace = vec![observed];
    let mut bfgs = Bfgs { h: None };
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.t_max {
        let (next, current) = if cfg.accelerate && iterations + 3 <= cfg.t_max {
            let (p1, _) = em_map(&f, &params, cfg, &mut bfgs);
            let (p2, l2) = em_map(&f, &p1, cfg, &mut bfgs);
            iterations += 2;
            let v0 = params.to_vec();
            let v1 = p1.to_vec();
            let v2 = p2.to_vec();
            let r: Vec<f64> = v1.iter().zip(&v0).map(|(a, b)| a - b).collect();
            let v: Vec<f64> = v2.iter().zip(&v1).zip(&r).map(|((a, b), c)| a - b - c).collect();
            let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let plain_ll = f.observed(&p2);
            if vn > 0.0 && rn > 0.0 {
                let alpha = (-rn / vn).clamp(-SQUAREM_MAX_STEP, -1.0);
                let ext: Vec<f64> =
                    v0.iter().zip(&r).zip(&v).map(|((x0, ri), vi)| x0 - 2.0 * alpha * ri + alpha * alpha * vi).collect();
                let ext = ZipgParams::from_vec(f.d, &ext).expect("dimension preserved");
                if ext.is_finite() {
                    let (p3, l3) = em_map(&f, &ext, cfg, &mut bfgs);
                    iterations += 1;
                    let ll3 = f.observed(&p3);
                    if ll3.is_finite() && ll3 >= plain_ll {
                        observed = ll3;
                        (p3, l3)
                    } else {
                        observed = plain_ll;
                        (p2, l2)
                    }
                } else {
                    observed = plain_ll;
                    (p2, l2)
                }
            } else {
                observed = plain_ll;
                (p2, l2)
            }
        } else {
            let (p1, l1) = em_map(&f, &params, cfg, &mut bfgs);
            iterations += 1;
            observed = f.observed(&p1);
            (p1, l1)
        };
        params = next;
        trace.push(observed);
        if relative_change(current, prev) < cfg.eps_tol {
            converged = true;
            break;
        }
        prev = current;
    }

    Ok(FitReport { params, loglik_trace: trace, iterations, converged, degenerate: false })
}
