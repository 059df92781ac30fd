use statrs::function::beta::beta_reg;

use super::special::{ln_factorial, ln_gamma_ratio};
use crate::error::{Error, Result};

/// Cumulative summation stops once the remaining tail mass drops below this.
pub const CDF_TAIL_CUTOFF: f64 = 1e-12;
/// Beyond this count the PG CDF is evaluated through the regularized incomplete beta.
const SUMMATION_LIMIT: u64 = 20_000;
const QUANTILE_CEILING: u64 = 1 << 52;

fn check(lambda: f64, theta: f64, pi: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be finite and > 0, got {lambda}")));
    }
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::Domain(format!("theta must be finite and > 0, got {theta}")));
    }
    if !(0.0..1.0).contains(&pi) {
        return Err(Error::Domain(format!("pi must lie in [0, 1), got {pi}")));
    }
    Ok(())
}

/// Log-pmf of the Poisson-Gamma part (NB with mean `lambda`, dispersion `theta`).
#[inline]
pub fn pg_log_pmf(w: u64, lambda: f64, theta: f64) -> f64 {
    let r = 1.0 / theta;
    let a = lambda * theta;
    let l1p = a.ln_1p();
    if w == 0 {
        return -r * l1p;
    }
    let wf = w as f64;
    ln_gamma_ratio(w, r) - ln_factorial(w) + wf * (a.ln() - l1p) - r * l1p
}

/// `log P(W = w)` under ZIPG(λ, θ, π).
pub fn zipg_log_pmf(w: u64, lambda: f64, theta: f64, pi: f64) -> Result<f64> {
    check(lambda, theta, pi)?;
    Ok(log_pmf_unchecked(w, lambda, theta, pi))
}

#[inline]
pub(crate) fn log_pmf_unchecked(w: u64, lambda: f64, theta: f64, pi: f64) -> f64 {
    let lpg = pg_log_pmf(w, lambda, theta);
    if w > 0 {
        return (-pi).ln_1p() + lpg;
    }
    if pi == 0.0 {
        return lpg;
    }
    // log(π + (1-π) e^lpg)
    let a = pi.ln();
    let b = (-pi).ln_1p() + lpg;
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `P(W ≤ w)` of the Poisson-Gamma part.
pub(crate) fn pg_cdf(w: u64, lambda: f64, theta: f64) -> f64 {
    let r = 1.0 / theta;
    let a = lambda * theta;
    if w > SUMMATION_LIMIT {
        return beta_reg(r, w as f64 + 1.0, 1.0 / (1.0 + a)).min(1.0);
    }
    let lq = a.ln() - a.ln_1p();
    let mut lp = -r * a.ln_1p();
    let mut sum = 0.0;
    for v in 0..=w {
        sum += lp.exp();
        if 1.0 - sum < CDF_TAIL_CUTOFF {
            return 1.0;
        }
        let vf = v as f64;
        lp += ((vf + r) / (vf + 1.0)).ln() + lq;
    }
    sum.min(1.0)
}

#[inline]
pub(crate) fn cdf_unchecked(w: i64, lambda: f64, theta: f64, pi: f64) -> f64 {
    if w < 0 {
        return 0.0;
    }
    let f = pg_cdf(w as u64, lambda, theta);
    if f >= 1.0 {
        1.0
    } else {
        (pi + (1.0 - pi) * f).min(1.0)
    }
}

/// `P(W ≤ w)`; `w = -1` gives 0.
pub fn zipg_cdf(w: i64, lambda: f64, theta: f64, pi: f64) -> Result<f64> {
    check(lambda, theta, pi)?;
    if w < -1 {
        return Err(Error::Domain(format!("cdf argument must be ≥ -1, got {w}")));
    }
    Ok(cdf_unchecked(w, lambda, theta, pi))
}

/// Generalized inverse: the least `w ≥ 0` with `F(w) ≥ u`.
pub fn zipg_quantile(u: f64, lambda: f64, theta: f64, pi: f64) -> Result<u64> {
    check(lambda, theta, pi)?;
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Domain(format!("quantile level must lie in [0, 1), got {u}")));
    }
    quantile_unchecked(u, lambda, theta, pi)
}

pub(crate) fn quantile_unchecked(u: f64, lambda: f64, theta: f64, pi: f64) -> Result<u64> {
    let f = |w: u64| cdf_unchecked(w as i64, lambda, theta, pi);
    if u <= f(0) {
        return Ok(0);
    }
    // F(lo) < u ≤ F(hi)
    let (mut lo, mut hi) = (0u64, 1u64);
    while f(hi) < u {
        lo = hi;
        hi *= 2;
        if hi > QUANTILE_CEILING {
            return Err(Error::Numerical(format!(
                "quantile bracket exceeded 2^52 (u = {u}, lambda = {lambda}, theta = {theta})"
            )));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid) >= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// NB pmf with mean `mu`, dispersion `alpha`, by the product form of the
    /// binomial coefficient; shares no code with the log-gamma path.
    fn nb_pmf_oracle(k: u64, mu: f64, alpha: f64) -> f64 {
        let r = 1.0 / alpha;
        let p = r / (r + mu);
        let mut coef = 1.0;
        for i in 0..k {
            coef *= (r + i as f64) / (i as f64 + 1.0);
        }
        coef * p.powf(r) * (1.0 - p).powi(k as i32)
    }

    #[test]
    fn pmf_closed_forms() {
        assert!((zipg_log_pmf(0, 1.0, 1.0, 0.3).unwrap() - 0.65f64.ln()).abs() < 1e-14);
        assert!((zipg_log_pmf(1, 1.0, 1.0, 0.0).unwrap() - 0.25f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn pmf_matches_nb_oracle_on_grid() {
        let lambdas = [0.1, 0.5, 1.0, 4.0, 20.0];
        let thetas = [0.05, 0.3, 1.0, 2.0, 5.0];
        for &l in &lambdas {
            for &t in &thetas {
                for &pi in &[0.0, 0.3, 0.8] {
                    for w in 0..40u64 {
                        let oracle = (1.0 - pi) * nb_pmf_oracle(w, l, t) + if w == 0 { pi } else { 0.0 };
                        let got = zipg_log_pmf(w, l, t, pi).unwrap().exp();
                        assert!((got - oracle).abs() < 1e-10, "w={w} l={l} t={t} pi={pi}: {got} vs {oracle}");
                    }
                }
            }
        }
    }

    #[test]
    fn cdf_edges() {
        assert_eq!(zipg_cdf(-1, 3.0, 0.2, 0.4).unwrap(), 0.0);
        assert!((zipg_cdf(0, 1.0, 1.0, 0.3).unwrap() - 0.65).abs() < 1e-14);
        assert!(zipg_cdf(-2, 1.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(zipg_quantile(0.5, 1.0, 1.0, 0.3).unwrap(), 0);
        assert_eq!(zipg_quantile(0.0, 7.0, 0.1, 0.0).unwrap(), 0);
        assert!(zipg_quantile(1.0, 1.0, 1.0, 0.3).is_err());
        assert!(zipg_quantile(-0.1, 1.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn domain_errors() {
        assert!(zipg_log_pmf(0, 0.0, 1.0, 0.1).is_err());
        assert!(zipg_log_pmf(0, 1.0, f64::INFINITY, 0.1).is_err());
        assert!(zipg_log_pmf(0, 1.0, 1.0, 1.0).is_err());
        assert!(zipg_log_pmf(0, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn cdf_matches_cumulative_sum_and_reaches_one() {
        for &l in &[0.1, 1.0, 10.0, 100.0] {
            for &t in &[0.05, 0.5, 2.0] {
                for &pi in &[0.0, 0.3, 0.8] {
                    let wmax = zipg_quantile(1.0 - 1e-12, l, t, pi).unwrap();
                    let mut acc = 0.0;
                    for w in 0..=wmax {
                        acc += zipg_log_pmf(w, l, t, pi).unwrap().exp();
                        let f = zipg_cdf(w as i64, l, t, pi).unwrap();
                        assert!(f == 1.0 || (f - acc).abs() < 1e-10, "l={l} t={t} w={w}");
                    }
                    assert!(zipg_cdf(wmax as i64, l, t, pi).unwrap() >= 1.0 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn large_count_branch_agrees_with_summation() {
        // Near the summation limit both routes must agree.
        let (l, t) = (20_000.0, 0.01);
        let w = SUMMATION_LIMIT;
        let summed = pg_cdf(w, l, t);
        let beta = beta_reg(1.0 / t, w as f64 + 1.0, 1.0 / (1.0 + l * t));
        assert!((summed - beta).abs() < 1e-9, "{summed} vs {beta}");
    }
}
