//! `zipgsk`: simulate multi-source count data, fit null models, draw
//! knockoffs, run simultaneous selection and benchmark FDR/power.
//!
//! Exit codes: 0 success, 2 usage, 3 config, 4 data, 5 dimension,
//! 6 domain, 7 numerical, 8 io, 9 internal. On failure a JSON object
//! `{"error": {"category", "message"}}` is printed to stderr.

mod commands;
mod config;
mod io;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use zipgsk::pipeline::{AggMode, PipelineConfig};
use zipgsk::simgen::SimConfig;
use zipgsk::simultaneous::OsffMode;
use zipgsk::statistics::{Backend, NullLabels};

#[derive(Parser)]
#[command(name = "zipgsk", version, about = "Simultaneous knockoff selection for multi-source zero-inflated count data")]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` file; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a multi-source dataset (CSV per source plus manifest.json).
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the null model of every source and write it as JSON.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw one synthetic null per source and write it as CSV.
    Knockoff {
        #[command(flatten)]
        data: DataArgs,
        /// Previously fitted models, one per source (fitted on the fly otherwise).
        #[arg(long)]
        model: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full selection pipeline; writes results.json and summary.txt.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        method: MethodArgs,
        /// Record wall-clock timing in results.json (breaks byte-for-byte reproducibility).
        #[arg(long)]
        record_timing: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate replicates, run the pipeline and score FDP/power into benchmark.csv.
    Benchmark {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long, default_value_t = 20)]
        reps: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Count table per source (CSV, or TSV by extension); repeat per source.
    #[arg(long, required = true)]
    sources: Vec<PathBuf>,
    /// Binary outcome per source, keyed by sample id.
    #[arg(long)]
    labels: Vec<PathBuf>,
    /// Covariates per source, keyed by sample id (none: intercept-only models).
    #[arg(long)]
    covariates: Vec<PathBuf>,
    /// Sequencing depth per source, keyed by sample id (default: row sums).
    #[arg(long)]
    depths: Vec<PathBuf>,
}

#[derive(Args, Clone)]
struct MethodArgs {
    #[arg(long, default_value_t = 0.2)]
    q: f64,
    #[arg(long, default_value = "de")]
    backend: Backend,
    #[arg(long, default_value = "dot")]
    osff: OsffMode,
    /// Knockoff+ threshold.
    #[arg(long)]
    plus: bool,
    /// Knockoff draws; more than one aggregates them.
    #[arg(long = "B", default_value_t = 1)]
    b_runs: usize,
    /// Per-draw level of the e-value aggregation (default: q).
    #[arg(long)]
    alpha_kn: Option<f64>,
    /// Labels that split the synthetic null in the DE backend.
    #[arg(long, default_value = "outcome")]
    null_labels: NullLabels,
    /// Aggregation branch when B > 1: evalue or stats.
    #[arg(long, default_value = "evalue", value_parser = parse_agg)]
    agg: AggMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long = "K", default_value_t = 2)]
    k_sources: usize,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    signal_frac: f64,
    #[arg(long, default_value_t = 0.8)]
    max_zero_prop: f64,
    #[arg(long, default_value_t = 0)]
    diff: usize,
    #[arg(long, default_value_t = 0.3)]
    delta_pi: f64,
    /// Sample every feature independently instead of through the copula.
    #[arg(long)]
    no_copula: bool,
}

fn parse_agg(s: &str) -> Result<AggMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "evalue" => Ok(AggMode::Evalue),
        "stats" => Ok(AggMode::Stats),
        other => Err(format!("unknown aggregation '{other}' (expected evalue or stats)")),
    }
}

impl MethodArgs {
    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            q: self.q,
            backend: self.backend,
            osff: self.osff,
            plus: self.plus,
            b_runs: self.b_runs,
            alpha_kn: self.alpha_kn,
            seed: self.seed,
            null_labels: self.null_labels,
            agg: self.agg,
            ..Default::default()
        }
    }
}

impl SimArgs {
    fn sim(&self, seed: u64) -> SimConfig {
        SimConfig {
            k_sources: self.k_sources,
            n: self.n,
            p: self.p,
            d: self.d,
            signal_frac: self.signal_frac,
            max_zero_prop: self.max_zero_prop,
            diff: self.diff,
            delta_pi: self.delta_pi,
            copula: !self.no_copula,
            seed,
        }
    }
}

fn category(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(z) = cause.downcast_ref::<zipgsk::Error>() {
            return z.category();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if let Some(c) = cause.downcast_ref::<csv::Error>() {
            return if c.is_io_error() { "io" } else { "data" };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return "data";
        }
    }
    "internal"
}

fn exit_code(category: &str) -> i32 {
    match category {
        "config" => 3,
        "data" => 4,
        "dimension" => 5,
        "domain" => 6,
        "numerical" => 7,
        "io" => 8,
        _ => 9,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(zipgsk::Error::Config("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Simulate { sim, seed, out } => commands::simulate(&sim.sim(seed), &out),
        Command::Fit { data, seed, out } => commands::fit(&data, seed, &out),
        Command::Knockoff { data, model, seed, out } => commands::knockoff(&data, &model, seed, &out),
        Command::Select { data, method, record_timing, out } => commands::select(&data, &method.pipeline(), record_timing, &out),
        Command::Benchmark { sim, method, reps, out } => commands::benchmark(&sim.sim(method.seed), &method.pipeline(), reps, &out),
    }
}

fn main() {
    let args = match config::merge_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => fail(e),
    };
    let cli = Cli::parse_from(args);
    if let Err(e) = run(cli) {
        fail(e);
    }
}

fn fail(e: anyhow::Error) -> ! {
    let cat = category(&e);
    let msg = format!("{e:#}");
    eprintln!("{}", serde_json::json!({ "error": { "category": cat, "message": msg } }));
    std::process::exit(exit_code(cat));
}
