//! Log-gamma and digamma differences at integer offsets.
//!
//! `lnΓ(w + r) - lnΓ(r)` loses all precision through cancellation when `r`
//! is large (near-Poisson features), so small `w` uses the exact finite sum
//! and large `r` an asymptotic expansion.

use statrs::function::gamma::{digamma, ln_gamma};

const DIRECT_SUM_MAX: u64 = 24;
const LARGE_SHAPE: f64 = 1e5;

/// `lnΓ(w + r) - lnΓ(r)`.
pub(crate) fn ln_gamma_ratio(w: u64, r: f64) -> f64 {
    if w == 0 {
        return 0.0;
    }
    if w <= DIRECT_SUM_MAX {
        let mut acc = 0.0;
        let mut prod = 1.0;
        for k in 0..w {
            prod *= r + k as f64;
            if prod > 1e250 {
                acc += prod.ln();
                prod = 1.0;
            }
        }
        return acc + prod.ln();
    }
    let wf = w as f64;
    if r > LARGE_SHAPE {
        // Stirling: lnΓ(x) = (x - 1/2) ln x - x + ln√(2π) + 1/(12x) - 1/(360x³) + ...
        let x = wf + r;
        return (r - 0.5) * (wf / r).ln_1p() + wf * x.ln() - wf + stirling_tail(x) - stirling_tail(r);
    }
    ln_gamma(wf + r) - ln_gamma(r)
}

fn stirling_tail(x: f64) -> f64 {
    let x2 = x * x;
    1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
}

/// `ψ(w + r) - ψ(r)`.
pub(crate) fn digamma_diff(w: u64, r: f64) -> f64 {
    if w == 0 {
        return 0.0;
    }
    if w <= DIRECT_SUM_MAX {
        return (0..w).map(|k| 1.0 / (r + k as f64)).sum();
    }
    let wf = w as f64;
    if r > LARGE_SHAPE {
        // ψ(x) = ln x - 1/(2x) - 1/(12x²) + 1/(120x⁴) - ...
        let x = wf + r;
        let tail = |y: f64| -1.0 / (2.0 * y) - 1.0 / (12.0 * y * y) + 1.0 / (120.0 * y.powi(4));
        return (wf / r).ln_1p() + tail(x) - tail(r);
    }
    digamma(wf + r) - digamma(r)
}

/// `lnΓ(w + 1)`.
pub(crate) fn ln_factorial(w: u64) -> f64 {
    if w < 2 {
        0.0
    } else {
        ln_gamma(w as f64 + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_matches_lgamma_in_safe_range() {
        for &r in &[0.05, 0.7, 3.0, 150.0] {
            for &w in &[1u64, 5, 24, 25, 80, 1000] {
                let direct = ln_gamma(w as f64 + r) - ln_gamma(r);
                assert!((ln_gamma_ratio(w, r) - direct).abs() < 1e-9 * direct.abs().max(1.0), "w={w} r={r}");
                let dd = digamma(w as f64 + r) - digamma(r);
                assert!((digamma_diff(w, r) - dd).abs() < 1e-9 * dd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn large_shape_branch_is_continuous() {
        // Compare the asymptotic branch against the exact finite sum.
        for &r in &[2e5, 1e8, 1e12] {
            let w = 40u64;
            let exact: f64 = (0..w).map(|k| (r + k as f64).ln()).sum();
            assert!((ln_gamma_ratio(w, r) - exact).abs() < 1e-9 * exact.abs());
            let exact_d: f64 = (0..w).map(|k| 1.0 / (r + k as f64)).sum();
            assert!((digamma_diff(w, r) - exact_d).abs() < 1e-9 * exact_d);
        }
    }
}
