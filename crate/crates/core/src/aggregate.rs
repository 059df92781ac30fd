//! Derandomization over repeated knockoff draws: each draw is turned into an
//! e-value vector, the vectors are averaged, and e-BH makes the selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{self, PipelineConfig, SourceInput};
use crate::simultaneous::{knockoff_threshold, FilterStats, SelectionResult};

/// Relative slack in the e-BH comparison so exact boundary cases like
/// `2 · 0.5 · 6 / 6 = 1` are not lost to rounding.
const EBH_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EValues {
    pub e: Vec<f64>,
    pub alpha_kn: f64,
    pub b_runs: usize,
}

/// Knockoff+ e-values of one draw at level `alpha_kn`:
/// `eⱼ = p·1[cⱼ ≥ τ₊] / (1 + #{c ≤ −τ₊})`, all zero when `τ₊ = +∞`.
pub fn run_evalue(c: &FilterStats, alpha_kn: f64) -> Result<Vec<f64>> {
    let p = c.c.len();
    let Some(tau) = knockoff_threshold(&c.c, alpha_kn, true)? else {
        return Ok(vec![0.0; p]);
    };
    let denom = 1.0 + c.c.iter().filter(|&&v| v <= -tau).count() as f64;
    Ok(c.c.iter().map(|&v| if v >= tau { p as f64 / denom } else { 0.0 }).collect())
}

/// Elementwise mean of the per-draw e-values.
pub fn aggregate_evalues(runs: &[Vec<f64>], alpha_kn: f64) -> Result<EValues> {
    let first = runs.first().ok_or_else(|| Error::Data("no e-value runs to aggregate".into()))?;
    let p = first.len();
    if runs.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("e-value runs have different lengths".into()));
    }
    let b = runs.len() as f64;
    let e = (0..p).map(|j| runs.iter().map(|r| r[j]).sum::<f64>() / b).collect();
    Ok(EValues { e, alpha_kn, b_runs: runs.len() })
}

/// e-BH: with `e₍₁₎ ≥ … ≥ e₍ₚ₎`, select the `k̂ = max{k : k·q·e₍ₖ₎/p ≥ 1}`
/// largest (ties by smaller index). `tau` is the smallest selected e-value.
pub fn ebh_select(ev: &EValues, q: f64, template: &FilterStats) -> Result<SelectionResult> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("target level must lie in (0, 1], got {q}")));
    }
    let p = ev.e.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| ev.e[b].total_cmp(&ev.e[a]).then(a.cmp(&b)));
    let k_hat = (1..=p)
        .rev()
        .find(|&k| {
            let e = ev.e[order[k - 1]];
            e > 0.0 && k as f64 * q * e / p as f64 >= 1.0 - EBH_SLACK
        })
        .unwrap_or(0);
    let mut selected: Vec<usize> = order[..k_hat].to_vec();
    selected.sort_unstable();
    let tau = (k_hat > 0).then(|| ev.e[order[k_hat - 1]]);
    let c = FilterStats { c: ev.e.clone(), mode: template.mode, k_sources: template.k_sources };
    Ok(SelectionResult { selected, tau, plus: true, q, c })
}

/// Aggregated ZIPG-SK: fit each source's null model once, draw `cfg.b_runs`
/// independent knockoff sets, convert each draw's filter statistics to
/// e-values, average, and select by e-BH at `cfg.q`.
pub fn agg_pipeline(sources: &[SourceInput], cfg: &PipelineConfig) -> Result<(SelectionResult, EValues)> {
    let models = pipeline::fit_sources(sources, cfg)?;
    agg_from_models(sources, &models, cfg)
}

/// [`agg_pipeline`] with the null models already fitted.
pub fn agg_from_models(sources: &[SourceInput], models: &[crate::copula::NullModel], cfg: &PipelineConfig) -> Result<(SelectionResult, EValues)> {
    if cfg.b_runs == 0 {
        return Err(Error::Config("B must be at least 1".into()));
    }
    let alpha = cfg.alpha_kn.unwrap_or(cfg.q);
    let mut runs = Vec::with_capacity(cfg.b_runs);
    let mut last = None;
    for b in 0..cfg.b_runs {
        let c = pipeline::filter_stats(sources, models, cfg, b as u64)?;
        runs.push(run_evalue(&c, alpha)?);
        last = Some(c);
    }
    let ev = aggregate_evalues(&runs, alpha)?;
    let sel = ebh_select(&ev, cfg.q, &last.expect("at least one run"))?;
    Ok((sel, ev))
}
