//! `results.json` written by `select`.

use serde::{Deserialize, Serialize};
use zipgsk::pipeline::{AggMode, PipelineConfig};
use zipgsk::simultaneous::OsffMode;
use zipgsk::statistics::{Backend, NullLabels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFiles {
    pub counts: String,
    pub labels: String,
    pub covariates: Option<String>,
    pub depths: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub backend: Backend,
    pub osff: OsffMode,
    pub plus: bool,
    #[serde(rename = "B")]
    pub b_runs: usize,
    pub alpha_kn: Option<f64>,
    pub null_labels: NullLabels,
    pub agg: AggMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub fit_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    /// Zero-based column index.
    pub index: usize,
    pub name: String,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub seed: u64,
    pub sources: Vec<SourceFiles>,
    pub method: Method,
    /// Only recorded with `--record-timing`, so default output is reproducible byte for byte.
    pub timing: Option<Timing>,
    pub q: f64,
    /// `null` means `+∞` (nothing selected).
    pub tau: Option<f64>,
    pub selected: Vec<Selected>,
    pub feature_names: Vec<String>,
    /// Filter statistic per feature (averaged e-values for aggregated runs).
    pub c: Vec<f64>,
    pub model_hashes: Vec<String>,
}

impl Method {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        Self {
            backend: cfg.backend,
            osff: cfg.osff,
            plus: cfg.plus,
            b_runs: cfg.b_runs,
            alpha_kn: cfg.alpha_kn,
            null_labels: cfg.null_labels,
            agg: cfg.agg,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_is_lossless() {
        let cfg = PipelineConfig { q: 0.1, alpha_kn: Some(0.05), seed: 42, ..Default::default() };
        let m = RunManifest {
            method: Method::from_config(&cfg),
            seed: cfg.seed,
            q: cfg.q,
            config: cfg,
            sources: vec![SourceFiles { counts: "a.csv".into(), labels: "y.csv".into(), covariates: None, depths: Some("m.csv".into()) }],
            timing: Some(Timing { fit_seconds: 0.1 + 0.2, total_seconds: 1.0 / 3.0 }),
            tau: Some(std::f64::consts::PI * 1e-7),
            selected: vec![Selected { index: 3, name: "g4".into(), c: -0.0 + 2.0_f64.sqrt() }],
            feature_names: vec!["g1".into(), "g2".into(), "g3".into(), "g4".into()],
            c: vec![0.0, -1e-300, 5e-324, 1.7976931348623157e308],
            model_hashes: vec!["ab".into()],
        };
        let json = serde_json::to_string_pretty(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), json);
    }
}
