//! End-to-end selection across sources.
//!
//! Per source: fit the null model, draw a synthetic null, compute paired
//! statistics. Across sources: combine with OSFF and threshold. With more
//! than one knockoff draw the draws are aggregated (see [`crate::aggregate`]).

use serde::{Deserialize, Serialize};

use crate::aggregate::{agg_from_models, EValues};
use crate::copula::{fit_null_model, sample_synthetic_null, NullModel};
use crate::error::{Error, Result};
use crate::matrix::SourceData;
use crate::rng::{derive_seed, Purpose};
use crate::simultaneous::{knockoff_select, osff, FilterStats, OsffMode, SelectionResult};
use crate::statistics::{check_binary, de_stats, glm_stats, Backend, GlmConfig, NullLabels, TestStats};
use crate::zipg::EmConfig;

pub type SourceInput = SourceData;

/// How repeated knockoff draws are combined when `b_runs > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggMode {
    /// Knockoff+ e-values per draw, averaged, then e-BH.
    #[default]
    Evalue,
    /// Per-source statistics averaged over draws, then one knockoff filter.
    Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub q: f64,
    pub backend: Backend,
    pub osff: OsffMode,
    pub plus: bool,
    pub b_runs: usize,
    /// Per-draw level for e-values; defaults to `q`.
    pub alpha_kn: Option<f64>,
    pub seed: u64,
    pub null_labels: NullLabels,
    pub agg: AggMode,
    pub em: EmConfig,
    pub glm: GlmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            q: 0.2,
            backend: Backend::De,
            osff: OsffMode::Dot,
            plus: false,
            b_runs: 1,
            alpha_kn: None,
            seed: 0,
            null_labels: NullLabels::default(),
            agg: AggMode::default(),
            em: EmConfig::default(),
            glm: GlmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub selection: SelectionResult,
    /// Present when the draws were aggregated through e-values.
    pub evalues: Option<EValues>,
    pub model_hashes: Vec<String>,
}

/// Sources must be non-empty, share the feature list and carry binary
/// labels with both classes.
pub fn validate_sources(sources: &[SourceInput]) -> Result<()> {
    let first = sources.first().ok_or_else(|| Error::Data("no sources given".into()))?;
    for (k, s) in sources.iter().enumerate() {
        s.validate()?;
        check_binary(&s.labels, s.counts.nrows()).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("source {}: {m}", k + 1)),
            other => other,
        })?;
        if s.counts.names() != first.counts.names() {
            let a = first.counts.names();
            let b = s.counts.names();
            let mut diff: Vec<String> = b.iter().filter(|n| !a.contains(n)).cloned().collect();
            diff.extend(a.iter().filter(|n| !b.contains(n)).cloned());
            let detail = if diff.is_empty() { "same names in a different order".to_string() } else { diff.join(", ") };
            return Err(Error::Data(format!("source {} features do not match source 1: {detail}", k + 1)));
        }
    }
    Ok(())
}

fn source_seed(cfg: &PipelineConfig, k: usize) -> u64 {
    derive_seed(cfg.seed, Purpose::Source, k as u64)
}

/// Null model of every source.
pub fn fit_sources(sources: &[SourceInput], cfg: &PipelineConfig) -> Result<Vec<NullModel>> {
    validate_sources(sources)?;
    sources
        .iter()
        .enumerate()
        .map(|(k, s)| fit_null_model(&s.counts, &s.covariates, &s.depths, &cfg.em, source_seed(cfg, k)))
        .collect()
}

/// Paired statistics of every source for knockoff draw `b`.
pub fn source_stats(sources: &[SourceInput], models: &[NullModel], cfg: &PipelineConfig, b: u64) -> Result<Vec<TestStats>> {
    if models.len() != sources.len() {
        return Err(Error::Dimension(format!("{} models for {} sources", models.len(), sources.len())));
    }
    sources
        .iter()
        .zip(models)
        .enumerate()
        .map(|(k, (s, m))| {
            let seed = source_seed(cfg, k);
            let syn = sample_synthetic_null(m, &s.covariates, &s.depths, derive_seed(seed, Purpose::Knockoff, b))?;
            let stat_seed = derive_seed(seed, Purpose::Replicate, b);
            let mut st = match cfg.backend {
                Backend::De => de_stats(&s.counts, &syn.counts, &s.labels, cfg.null_labels, stat_seed)?,
                Backend::Glm => glm_stats(&s.counts, &syn.counts, &s.labels, &cfg.glm, stat_seed)?,
            };
            st.source_id = format!("source{}", k + 1);
            Ok(st)
        })
        .collect()
}

/// OSFF-combined filter statistics for knockoff draw `b`.
pub fn filter_stats(sources: &[SourceInput], models: &[NullModel], cfg: &PipelineConfig, b: u64) -> Result<FilterStats> {
    osff(&source_stats(sources, models, cfg, b)?, cfg.osff)
}

/// Single knockoff draw: combine and threshold at `q`.
pub fn single_from_models(sources: &[SourceInput], models: &[NullModel], cfg: &PipelineConfig) -> Result<SelectionResult> {
    knockoff_select(&filter_stats(sources, models, cfg, 0)?, cfg.q, cfg.plus)
}

fn mean_stats_from_models(sources: &[SourceInput], models: &[NullModel], cfg: &PipelineConfig) -> Result<SelectionResult> {
    let mut acc: Option<Vec<TestStats>> = None;
    for b in 0..cfg.b_runs {
        let stats = source_stats(sources, models, cfg, b as u64)?;
        match acc.as_mut() {
            None => acc = Some(stats),
            Some(a) => {
                for (x, y) in a.iter_mut().zip(&stats) {
                    x.z.iter_mut().zip(&y.z).for_each(|(u, v)| *u += v);
                    x.z_tilde.iter_mut().zip(&y.z_tilde).for_each(|(u, v)| *u += v);
                }
            }
        }
    }
    let mut stats = acc.ok_or_else(|| Error::Config("B must be at least 1".into()))?;
    let b = cfg.b_runs as f64;
    for s in &mut stats {
        s.z.iter_mut().chain(s.z_tilde.iter_mut()).for_each(|v| *v /= b);
    }
    knockoff_select(&osff(&stats, cfg.osff)?, cfg.q, cfg.plus)
}

/// Full run with fitted models: a single draw when `b_runs == 1`, otherwise
/// aggregation according to `cfg.agg`.
pub fn run_with_models(sources: &[SourceInput], models: &[NullModel], cfg: &PipelineConfig) -> Result<RunOutput> {
    if !(cfg.q > 0.0 && cfg.q <= 1.0) {
        return Err(Error::Config(format!("q must lie in (0, 1], got {}", cfg.q)));
    }
    if let Some(a) = cfg.alpha_kn {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Config(format!("alpha_kn must lie in (0, 1], got {a}")));
        }
    }
    let model_hashes = models.iter().map(NullModel::hash).collect();
    let (selection, evalues) = match (cfg.b_runs, cfg.agg) {
        (0, _) => return Err(Error::Config("B must be at least 1".into())),
        (1, _) => (single_from_models(sources, models, cfg)?, None),
        (_, AggMode::Evalue) => {
            let (s, e) = agg_from_models(sources, models, cfg)?;
            (s, Some(e))
        }
        (_, AggMode::Stats) => (mean_stats_from_models(sources, models, cfg)?, None),
    };
    Ok(RunOutput { selection, evalues, model_hashes })
}

pub fn run(sources: &[SourceInput], cfg: &PipelineConfig) -> Result<RunOutput> {
    let models = fit_sources(sources, cfg)?;
    run_with_models(sources, &models, cfg)
}
