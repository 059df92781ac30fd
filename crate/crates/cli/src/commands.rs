use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use zipgsk::copula::{fit_null_model, sample_synthetic_null, NullModel};
use zipgsk::pipeline::{fit_sources, run_with_models, PipelineConfig, SourceInput};
use zipgsk::rng::{derive_seed, Purpose};
use zipgsk::simgen::{evaluate, gen_multisource, SimConfig};
use zipgsk::matrix::{depths_from_counts, SourceData};
use zipgsk::{CountMatrix, Error, Matrix};

use crate::io;
use crate::manifest::{Method, RunManifest, Selected, SourceFiles, Timing};
use crate::DataArgs;

fn ensure_dir(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sample_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("s{i}")).collect()
}

fn source_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, Purpose::Source, k as u64)
}

/// Optional per-source list: empty, or exactly one entry per source.
fn per_source<'a>(flag: &str, list: &'a [PathBuf], k: usize) -> anyhow::Result<Vec<Option<&'a PathBuf>>> {
    match list.len() {
        0 => Ok(vec![None; k]),
        n if n == k => Ok(list.iter().map(Some).collect()),
        n => Err(Error::Config(format!("--{flag} given {n} times for {k} sources")).into()),
    }
}

struct Loaded {
    ids: Vec<String>,
    counts: CountMatrix,
    labels: Option<Vec<u8>>,
    covariates: Matrix,
    depths: Vec<f64>,
}

fn load(data: &DataArgs, need_labels: bool) -> anyhow::Result<Vec<Loaded>> {
    let k = data.sources.len();
    if need_labels && data.labels.len() != k {
        return Err(Error::Config(format!("--labels given {} times for {k} sources", data.labels.len())).into());
    }
    let labels = per_source("labels", &data.labels, k)?;
    let covs = per_source("covariates", &data.covariates, k)?;
    let depths = per_source("depths", &data.depths, k)?;
    let mut out = Vec::with_capacity(k);
    for (i, path) in data.sources.iter().enumerate() {
        let (ids, counts) = io::read_counts(path)?;
        let labels = labels[i].map(|p| io::read_labels(p, &ids)).transpose()?;
        let covariates = match covs[i] {
            Some(p) => io::read_covariates(p, &ids)?,
            None => Matrix::zeros(ids.len(), 0),
        };
        let depths = match depths[i] {
            Some(p) => io::read_depths(p, &ids)?,
            None => depths_from_counts(&counts),
        };
        out.push(Loaded { ids, counts, labels, covariates, depths });
    }
    if let Some(first) = out.first() {
        for (i, s) in out.iter().enumerate().skip(1) {
            if s.counts.names() != first.counts.names() {
                let a = first.counts.names();
                let b = s.counts.names();
                let detail = match a.iter().zip(b).position(|(x, y)| x != y) {
                    Some(j) => format!("column {} is '{}' in {} but '{}' in {}", j + 1, a[j], data.sources[0].display(), b[j], data.sources[i].display()),
                    None => format!("{} has {} features but {} has {}", data.sources[0].display(), a.len(), data.sources[i].display(), b.len()),
                };
                return Err(Error::Dimension(format!("feature headers differ across sources: {detail}")).into());
            }
        }
    }
    Ok(out)
}

fn to_inputs(loaded: Vec<Loaded>) -> Vec<SourceInput> {
    loaded
        .into_iter()
        .map(|s| SourceInput { counts: s.counts, labels: s.labels.unwrap_or_default(), covariates: s.covariates, depths: s.depths })
        .collect()
}

fn fit_one(s: &Loaded, seed: u64, k: usize) -> anyhow::Result<NullModel> {
    let sd = SourceData { counts: s.counts.clone(), labels: vec![0; s.ids.len()], covariates: s.covariates.clone(), depths: s.depths.clone() };
    sd.validate()?;
    Ok(fit_null_model(&s.counts, &s.covariates, &s.depths, &PipelineConfig::default().em, source_seed(seed, k))?)
}

pub fn simulate(cfg: &SimConfig, out: &Path) -> anyhow::Result<()> {
    let data = gen_multisource(cfg)?;
    ensure_dir(out)?;
    for (k, s) in data.sources.iter().enumerate() {
        let ids = sample_ids(s.counts.nrows());
        io::write_counts(&out.join(format!("source{}_counts.csv", k + 1)), &ids, &s.counts)?;
        io::write_labels(&out.join(format!("source{}_labels.csv", k + 1)), &ids, &s.labels)?;
        io::write_covariates(&out.join(format!("source{}_covariates.csv", k + 1)), &ids, &s.covariates)?;
    }
    let manifest = serde_json::json!({
        "config": cfg,
        "signal_sets": data.signal_sets,
        "common_signals": data.common_signals,
        "feature_names": data.sources[0].counts.names(),
    });
    write_json(&out.join("manifest.json"), &manifest)
}

pub fn fit(data: &DataArgs, seed: u64, out: &Path) -> anyhow::Result<()> {
    let loaded = load(data, false)?;
    ensure_dir(out)?;
    for (k, s) in loaded.iter().enumerate() {
        let model = fit_one(s, seed, k)?;
        write_json(&out.join(format!("source{}_model.json", k + 1)), &model)?;
    }
    Ok(())
}

pub fn knockoff(data: &DataArgs, models: &[PathBuf], seed: u64, out: &Path) -> anyhow::Result<()> {
    let loaded = load(data, false)?;
    let model_paths = per_source("model", models, loaded.len())?;
    ensure_dir(out)?;
    for (k, s) in loaded.iter().enumerate() {
        let model = match model_paths[k] {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str::<NullModel>(&text).with_context(|| format!("parsing model {}", p.display()))?
            }
            None => fit_one(s, seed, k)?,
        };
        let syn = sample_synthetic_null(&model, &s.covariates, &s.depths, derive_seed(source_seed(seed, k), Purpose::Knockoff, 0))?;
        let mut counts = syn.counts;
        counts.set_names(s.counts.names().to_vec())?;
        io::write_counts(&out.join(format!("source{}_knockoff.csv", k + 1)), &s.ids, &counts)?;
    }
    Ok(())
}

pub fn select(data: &DataArgs, cfg: &PipelineConfig, record_timing: bool, out: &Path) -> anyhow::Result<()> {
    let start = Instant::now();
    let loaded = load(data, true)?;
    let names = loaded[0].counts.names().to_vec();
    let files: Vec<SourceFiles> = (0..loaded.len())
        .map(|k| SourceFiles {
            counts: data.sources[k].display().to_string(),
            labels: data.labels[k].display().to_string(),
            covariates: data.covariates.get(k).map(|p| p.display().to_string()),
            depths: data.depths.get(k).map(|p| p.display().to_string()),
        })
        .collect();
    let sources = to_inputs(loaded);
    let models = fit_sources(&sources, cfg)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let res = run_with_models(&sources, &models, cfg)?;
    let sel = &res.selection;
    let c = res.evalues.as_ref().map_or_else(|| sel.c.c.clone(), |e| e.e.clone());
    let manifest = RunManifest {
        config: cfg.clone(),
        seed: cfg.seed,
        sources: files,
        method: Method::from_config(cfg),
        timing: record_timing.then(|| Timing { fit_seconds, total_seconds: start.elapsed().as_secs_f64() }),
        q: cfg.q,
        tau: sel.tau,
        selected: sel.selected.iter().map(|&j| Selected { index: j, name: names[j].clone(), c: c[j] }).collect(),
        feature_names: names,
        c,
        model_hashes: res.model_hashes,
    };
    ensure_dir(out)?;
    write_json(&out.join("results.json"), &manifest)?;
    let tau = manifest.tau.map_or_else(|| "inf".to_string(), |t| format!("{t}"));
    let mut summary = format!(
        "sources: {}\nfeatures: {}\nq: {}\nbackend: {}\nosff: {}\nB: {}\ntau: {tau}\nselected: {}\n",
        manifest.sources.len(),
        manifest.feature_names.len(),
        cfg.q,
        cfg.backend,
        cfg.osff,
        cfg.b_runs,
        manifest.selected.len()
    );
    for s in &manifest.selected {
        summary.push_str(&format!("  {}\t{}\t{}\n", s.index, s.name, s.c));
    }
    fs::write(out.join("summary.txt"), summary).with_context(|| format!("writing {}", out.join("summary.txt").display()))
}

pub fn benchmark(sim: &SimConfig, cfg: &PipelineConfig, reps: u64, out: &Path) -> anyhow::Result<()> {
    if reps == 0 {
        return Err(Error::Config("--reps must be at least 1".into()).into());
    }
    sim.validate()?;
    let master = sim.seed;
    let rows = (0..reps)
        .into_par_iter()
        .map(|r| {
            let t = Instant::now();
            let data = gen_multisource(&SimConfig { seed: derive_seed(master, Purpose::Generate, r), ..sim.clone() })?;
            let run_cfg = PipelineConfig { seed: derive_seed(master, Purpose::Replicate, r), ..cfg.clone() };
            let res = zipgsk::pipeline::run(&data.sources, &run_cfg)?;
            let (fdp, power) = evaluate(&res.selection.selected, &data.common_signals, sim.p)?;
            Ok((r, fdp, power, res.selection.selected.len(), t.elapsed().as_secs_f64()))
        })
        .collect::<zipgsk::Result<Vec<_>>>()?;
    ensure_dir(out)?;
    let path = out.join("benchmark.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["replicate", "fdp", "power", "n_selected", "seconds"])?;
    for (r, fdp, power, n, secs) in &rows {
        w.write_record([r.to_string(), fdp.to_string(), power.to_string(), n.to_string(), format!("{secs:.3}")])?;
    }
    w.flush()?;
    let m = rows.len() as f64;
    let mean_fdp = rows.iter().map(|r| r.1).sum::<f64>() / m;
    let mean_power = rows.iter().map(|r| r.2).sum::<f64>() / m;
    println!("replicates: {}\nmean FDP: {mean_fdp:.4}\nmean power: {mean_power:.4}", rows.len());
    Ok(())
}
