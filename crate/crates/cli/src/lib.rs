//! Command implementations behind the `sketchlift` binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Deserialize;

use sketchlift::dataset::{load_csv, save_csv, Labeling};
use sketchlift::eval::{
    misclassification_error, run_method, run_sweep, write_plot_csv, write_records_csv,
    ExperimentConfig, Method, MethodParams,
};
use sketchlift::kmeans::KMeansConfig;
use sketchlift::sketch::{fixed_sketch_size, SketchMode};
use sketchlift::theory::{ideal_weights, threshold_bcsl, threshold_full, threshold_sl};
use sketchlift::SolverConfig;

#[derive(Debug, Parser)]
#[command(name = "sketchlift", version, about = "Sketch-and-lift SDP K-means clustering")]
pub struct Cli {
    /// Worker threads for replicate runs (default: number of cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a Gaussian mixture dataset and write it as CSV with a label column.
    Generate(GenerateArgs),
    /// Cluster a CSV dataset with one method.
    Cluster(ClusterArgs),
    /// Run replicates over a one-parameter grid and write results and plot data.
    Sweep(SweepArgs),
    /// Print separation thresholds, sketch sizes and ideal weights for a config.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// CSV dataset; a `label` column, if present, is used as ground truth.
    pub data: PathBuf,
    /// M0 (K-means++), M1 (SL), M2 (BCSL), M3 (WSL), M4 (ME-SL), M5 (MR-WSL) or O (full SDP).
    #[arg(long)]
    pub method: String,
    /// Optional TOML file with method parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-point labels (1-based) are written here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest n accepted by the full SDP (method O).
    #[arg(long)]
    pub cap_full_sdp: Option<usize>,
    /// ME-SL block size.
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Per-run results CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Aggregated plot-data CSV (default: `<out>` with a `.plot.csv` suffix).
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Comma-separated method list overriding the config.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cap_full_sdp: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub gamma: Option<f64>,
}

/// Parameters for `cluster`; every field is optional so an experiment
/// config can be reused as is.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub k: Option<usize>,
    pub gamma: f64,
    pub rounds: usize,
    pub seed: u64,
    pub mesl_block: Option<usize>,
    pub sketch_mode: SketchMode,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub full_sdp_cap: usize,
    pub relift_sketch: bool,
    pub solver: SolverConfig,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let p = MethodParams::default();
        Self {
            k: None,
            gamma: p.gamma,
            rounds: p.rounds,
            seed: 0,
            mesl_block: None,
            sketch_mode: p.sketch_mode,
            kmeans_restarts: p.kmeans.restarts,
            kmeans_max_iter: p.kmeans.max_iter,
            full_sdp_cap: p.full_sdp_cap,
            relift_sketch: p.relift_sketch,
            solver: p.solver,
        }
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = read_toml(path)?;
    cfg.validate()
        .with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Method>().map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        bail!("method: empty method list");
    }
    Ok(methods)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("jobs: must be >= 1");
        }
        // A second call in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match cli.command {
        Command::Generate(args) => cmd_generate(&args, out),
        Command::Cluster(args) => cmd_cluster(&args, out),
        Command::Sweep(args) => cmd_sweep(&args, out),
        Command::Report(args) => cmd_report(&args, out),
    }
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_experiment(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let spec = cfg.gmm_spec(cfg.seed)?;
    if let Some(lambda) = cfg.lambda_star {
        info!("lambda_star={lambda} gives delta2={}", spec.delta * spec.delta);
    }
    let (data, labels) = sketchlift::dataset::generate_gmm(&spec)?;
    save_csv(&data, Some(&labels), &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(
        out,
        "n={} p={} k={} delta2={} seed={} out={}",
        data.n(),
        data.p(),
        spec.k(),
        spec.delta * spec.delta,
        cfg.seed,
        args.out.display()
    )?;
    Ok(())
}

pub fn cmd_cluster(args: &ClusterArgs, out: &mut dyn Write) -> Result<()> {
    let method: Method = args.method.parse()?;
    let mut cfg = match &args.config {
        Some(path) => read_toml::<ClusterConfig>(path)?,
        None => ClusterConfig::default(),
    };
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(c) = args.cap_full_sdp {
        cfg.full_sdp_cap = c;
    }
    if args.m.is_some() {
        cfg.mesl_block = args.m;
    }

    let (data, truth) =
        load_csv(&args.data).with_context(|| format!("reading {}", args.data.display()))?;
    let k = args
        .k
        .or(cfg.k)
        .or(truth.as_ref().map(Labeling::k))
        .context("k: cluster count required (flag, config, or label column)")?;

    let params = MethodParams {
        gamma: cfg.gamma,
        sketch_mode: cfg.sketch_mode,
        rounds: cfg.rounds,
        mesl_block: cfg.mesl_block,
        kmeans: KMeansConfig {
            restarts: cfg.kmeans_restarts,
            max_iter: cfg.kmeans_max_iter,
        },
        solver: cfg.solver,
        full_sdp_cap: cfg.full_sdp_cap,
        relift_sketch: cfg.relift_sketch,
    };
    let start = Instant::now();
    let outcome = run_method(method, &data, k, &params, cfg.seed)?;
    let wall = start.elapsed().as_secs_f64();

    if let Some(path) = &args.out {
        write_labels(path, &outcome.labeling)?;
    }
    let mut line = format!(
        "method={method} n={} k={k} wall_time_s={wall} iterations={} converged={}",
        data.n(),
        outcome.iterations,
        outcome.converged
    );
    if let Some(truth) = &truth {
        let err = misclassification_error(&outcome.labeling, truth)?;
        line.push_str(&format!(" error={err}"));
    }
    writeln!(out, "{line}")?;
    Ok(())
}

fn write_labels(path: &Path, labels: &Labeling) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    writeln!(w, "label")?;
    for &a in labels.assignments() {
        writeln!(w, "{}", a + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn default_plot_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    out.with_file_name(format!("{stem}.plot.csv"))
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_experiment(&args.config)?;
    if let Some(list) = &args.method {
        cfg.methods = parse_methods(list)?;
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(c) = args.cap_full_sdp {
        cfg.full_sdp_cap = c;
    }
    cfg.validate()?;
    if cfg.sweep.is_none() {
        bail!("sweep: config has no [sweep] section");
    }

    let result = run_sweep(&cfg)?;
    let mut w = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    write_records_csv(&result.records, &mut w)?;
    w.flush()?;

    let plot_path = args.plot.clone().unwrap_or_else(|| default_plot_path(&args.out));
    let mut w = BufWriter::new(
        File::create(&plot_path).with_context(|| format!("creating {}", plot_path.display()))?,
    );
    write_plot_csv(&result.plot, &mut w)?;
    w.flush()?;

    let failures = result.records.iter().filter(|r| r.failure.is_some()).count();
    writeln!(
        out,
        "records={} failures={failures} results={} plot={}",
        result.records.len(),
        args.out.display(),
        plot_path.display()
    )?;
    Ok(())
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_experiment(&args.config)?;
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    cfg.validate()?;
    let sizes = cfg.cluster_sizes()?;
    let inputs = cfg.threshold_inputs()?;
    let n = inputs.n();
    let k = inputs.k();

    let sizes_text: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    writeln!(out, "n={n}")?;
    writeln!(out, "k={k}")?;
    writeln!(out, "p={}", cfg.p)?;
    writeln!(out, "sigma={}", cfg.sigma)?;
    writeln!(out, "gamma={}", cfg.gamma)?;
    writeln!(out, "sizes={}", sizes_text.join(","))?;
    writeln!(out, "n_star={}", inputs.n_star())?;
    writeln!(out, "threshold_full={}", threshold_full(&inputs)?)?;
    writeln!(
        out,
        "threshold_sl={}",
        threshold_sl(n, k, cfg.p, cfg.sigma, cfg.gamma)?
    )?;
    writeln!(
        out,
        "threshold_bcsl={}",
        threshold_bcsl(n, inputs.n_min(), cfg.p, cfg.sigma, cfg.gamma)?
    )?;
    if cfg.centers.is_none() {
        writeln!(out, "delta2={}", cfg.separation2()?)?;
    }
    writeln!(out, "sketch_size={}", fixed_sketch_size(n, cfg.gamma))?;
    writeln!(out, "expected_bernoulli_size={}", cfg.gamma * n as f64)?;

    let truth = Labeling::from_sizes(&sizes)?;
    let ideal = ideal_weights(&truth, cfg.gamma)?;
    let mut start = 0;
    for (c, &size) in sizes.iter().enumerate() {
        writeln!(out, "ideal_weight_{}={}", c + 1, ideal.weights.as_slice()[start])?;
        start += size;
    }
    writeln!(out, "ideal_weights_clipped={}", ideal.clipped)?;
    writeln!(
        out,
        "ideal_expected_size={}",
        ideal.weights.expected_size()
    )?;
    Ok(())
}

/// One machine-readable line describing a failure.
pub fn failure_line(err: &anyhow::Error) -> String {
    let chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
    format!("status=error message={:?}", chain.join(": "))
}
