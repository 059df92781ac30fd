//! Combining per-source statistics into one filter statistic per feature and
//! thresholding it with the knockoff / knockoff+ rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statistics::TestStats;

/// One-swap flip-sign combiner of the per-source contrasts `Zₖ − Z̃ₖ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OsffMode {
    /// Elementwise product.
    #[default]
    Dot,
    /// Elementwise sum.
    Sum,
    /// Elementwise maximum over sources.
    Max,
}

impl std::str::FromStr for OsffMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(Self::Dot),
            "sum" => Ok(Self::Sum),
            "max" => Ok(Self::Max),
            other => Err(Error::Config(format!("unknown osff mode '{other}' (expected dot, sum or max)"))),
        }
    }
}

impl std::fmt::Display for OsffMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Dot => "dot",
            Self::Sum => "sum",
            Self::Max => "max",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub c: Vec<f64>,
    pub mode: OsffMode,
    pub k_sources: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Zero-based indices, ascending.
    pub selected: Vec<usize>,
    /// `None` stands for `+∞` (nothing selected).
    pub tau: Option<f64>,
    pub plus: bool,
    pub q: f64,
    pub c: FilterStats,
}

/// Combine per-source contrasts elementwise.
pub fn osff(stats: &[TestStats], mode: OsffMode) -> Result<FilterStats> {
    let first = stats.first().ok_or_else(|| Error::Data("no sources to combine".into()))?;
    let p = first.p();
    for s in stats {
        if s.z.len() != p || s.z_tilde.len() != p {
            return Err(Error::Dimension(format!("sources disagree on the feature count ({p} vs {})", s.z.len())));
        }
    }
    let contrasts: Vec<Vec<f64>> = stats.iter().map(TestStats::contrast).collect();
    let c = (0..p)
        .map(|j| {
            let it = contrasts.iter().map(|d| d[j]);
            match mode {
                OsffMode::Dot => it.product(),
                OsffMode::Sum => it.sum(),
                OsffMode::Max => it.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect::<Vec<f64>>();
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite filter statistic".into()));
    }
    Ok(FilterStats { c, mode, k_sources: stats.len() })
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("target level must lie in (0, 1], got {q}")));
    }
    Ok(())
}

/// Knockoff (or knockoff+ when `plus`) threshold: the least `t` among the
/// nonzero `|cⱼ|` with `(#{cⱼ ≤ −t} + plus) / max(#{cⱼ ≥ t}, 1) ≤ q`.
/// `None` when no candidate qualifies.
pub fn knockoff_threshold(c: &[f64], q: f64, plus: bool) -> Result<Option<f64>> {
    check_q(q)?;
    let mut cand: Vec<f64> = c.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    // Ascending scan with two sorted lists: positives and |negatives|.
    let mut pos: Vec<f64> = c.iter().copied().filter(|&v| v > 0.0).collect();
    let mut neg: Vec<f64> = c.iter().filter(|&&v| v < 0.0).map(|v| -v).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let (mut ip, mut ineg) = (0, 0);
    let offset = if plus { 1.0 } else { 0.0 };
    for t in cand {
        while ip < pos.len() && pos[ip] < t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] < t {
            ineg += 1;
        }
        let num = (neg.len() - ineg) as f64 + offset;
        let den = ((pos.len() - ip) as f64).max(1.0);
        if num / den <= q {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// `{j : cⱼ ≥ τ}`.
pub fn select(c: &FilterStats, tau: Option<f64>, q: f64, plus: bool) -> SelectionResult {
    let selected = match tau {
        Some(t) => (0..c.c.len()).filter(|&j| c.c[j] >= t).collect(),
        None => Vec::new(),
    };
    SelectionResult { selected, tau, plus, q, c: c.clone() }
}

/// Threshold and select in one step.
pub fn knockoff_select(c: &FilterStats, q: f64, plus: bool) -> Result<SelectionResult> {
    let tau = knockoff_threshold(&c.c, q, plus)?;
    Ok(select(c, tau, q, plus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use crate::statistics::Backend;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn ts(z: Vec<f64>) -> TestStats {
        let p = z.len();
        TestStats { z, z_tilde: vec![0.0; p], backend: Backend::De, source_id: String::new() }
    }

    fn fs(c: Vec<f64>) -> FilterStats {
        FilterStats { c, mode: OsffMode::Dot, k_sources: 1 }
    }

    /// Direct evaluation of the threshold definition over every candidate.
    fn brute_threshold(c: &[f64], q: f64, plus: bool) -> Option<f64> {
        let mut best: Option<f64> = None;
        for &t in c.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect::<Vec<_>>().iter() {
            let num = c.iter().filter(|&&v| v <= -t).count() as f64 + if plus { 1.0 } else { 0.0 };
            let den = (c.iter().filter(|&&v| v >= t).count() as f64).max(1.0);
            if num / den <= q && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
        best
    }

    #[test]
    fn osff_modes() {
        let s = [ts(vec![1.0, -2.0]), ts(vec![3.0, 1.0])];
        assert_eq!(osff(&s, OsffMode::Dot).unwrap().c, vec![3.0, -2.0]);
        assert_eq!(osff(&s, OsffMode::Sum).unwrap().c, vec![4.0, -1.0]);
        assert_eq!(osff(&s, OsffMode::Max).unwrap().c, vec![3.0, 1.0]);
        let one = TestStats { z: vec![2.0, 1.0], z_tilde: vec![0.5, 3.0], backend: Backend::Glm, source_id: String::new() };
        assert_eq!(osff(&[one], OsffMode::Dot).unwrap().c, vec![1.5, -2.0]);
        assert!(osff(&[ts(vec![1.0]), ts(vec![1.0, 2.0])], OsffMode::Sum).is_err());
        assert!(osff(&[], OsffMode::Sum).is_err());
    }

    #[test]
    fn worked_thresholds() {
        let c = [3.0, -2.0, 1.0, 4.0, -1.0, 2.0];
        assert_eq!(knockoff_threshold(&c, 0.5, false).unwrap(), Some(1.0));
        assert_eq!(knockoff_threshold(&c, 0.5, true).unwrap(), Some(3.0));
        let sel = select(&fs(c.to_vec()), Some(1.0), 0.5, false);
        assert_eq!(sel.selected, vec![0, 2, 3, 5]);
        assert!(select(&fs(c.to_vec()), None, 0.5, false).selected.is_empty());
        assert_eq!(knockoff_threshold(&[0.5, 2.0, 1.5], 1.0, false).unwrap(), Some(0.5));
        assert_eq!(knockoff_threshold(&[-0.5, -2.0], 0.9, false).unwrap(), None);
        assert_eq!(knockoff_threshold(&[0.0, 0.0], 0.9, false).unwrap(), None);
        assert!(knockoff_threshold(&c, 0.0, false).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = substream(99, Purpose::Generate, 0);
        for _ in 0..1000 {
            let p = rng.random_range(1..=12);
            // Small integer grid to exercise ties and zeros.
            let c: Vec<f64> = (0..p).map(|_| rng.random_range(-4i32..=6) as f64 / 2.0).collect();
            for &q in &[0.1, 0.2, 0.5] {
                for plus in [false, true] {
                    assert_eq!(knockoff_threshold(&c, q, plus).unwrap(), brute_threshold(&c, q, plus), "{c:?} {q} {plus}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn selection_properties(c in prop::collection::vec(-5.0f64..5.0, 1..30), q1 in 0.05f64..1.0, dq in 0.0f64..0.5) {
            let q2 = (q1 + dq).min(1.0);
            for plus in [false, true] {
                let a = knockoff_select(&fs(c.clone()), q1, plus).unwrap();
                let b = knockoff_select(&fs(c.clone()), q2, plus).unwrap();
                prop_assert!(a.selected.iter().all(|j| b.selected.contains(j)));
                if let Some(t) = a.tau {
                    prop_assert!(t > 0.0);
                    prop_assert!(c.iter().any(|v| v.abs() == t));
                    let neg = c.iter().filter(|&&v| v <= -t).count() as f64 + if plus { 1.0 } else { 0.0 };
                    prop_assert!(neg / (a.selected.len().max(1) as f64) <= q1);
                } else {
                    prop_assert!(a.selected.is_empty());
                }
                prop_assert_eq!(knockoff_threshold(&c, q1, plus).unwrap(), brute_threshold(&c, q1, plus));
            }
        }
    }
}
