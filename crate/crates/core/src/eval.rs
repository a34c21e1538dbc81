//! Misclassification error, replicate runs, parameter sweeps and aggregation.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::dataset::{generate_gmm, CenterLayout, DataMatrix, GmmSpec, Labeling};
use crate::error::{Error, Result};
use crate::keys::derive_seed;
use crate::kmeans::{kmeans, KMeansConfig};
use crate::sdp::SolverConfig;
use crate::sketch::{
    bcsl_cluster, fixed_sketch_size, full_sdp_cluster, mesl_cluster, mrwsl_cluster, sl_cluster,
    wsl_cluster, SketchConfig, SketchMode,
};
use crate::theory::{threshold_bcsl, threshold_full, threshold_sl, ThresholdInputs};

/// Value substituted for a zero mean error in plot data (log-scale axes).
pub const PLOT_ZERO_ERROR: f64 = 1e-6;

/// Fraction of points misclassified under the best matching of cluster
/// names, found as a maximum-weight matching on the confusion matrix.
pub fn misclassification_error(pred: &Labeling, truth: &Labeling) -> Result<f64> {
    if pred.n() != truth.n() {
        return Err(Error::DimensionMismatch {
            expected: truth.n(),
            actual: pred.n(),
        });
    }
    if pred.n() == 0 {
        return Ok(0.0);
    }
    let size = pred.k().max(truth.k());
    let mut confusion = vec![vec![0.0; size]; size];
    for (&a, &b) in pred.assignments().iter().zip(truth.assignments()) {
        confusion[a][b] += 1.0;
    }
    let cost: Vec<Vec<f64>> = confusion
        .iter()
        .map(|row| row.iter().map(|c| -c).collect())
        .collect();
    let perm = min_cost_assignment(&cost)?;
    let matched: f64 = perm.iter().enumerate().map(|(a, &b)| confusion[a][b]).sum();
    Ok((pred.n() as f64 - matched) / pred.n() as f64)
}

/// The method roster: K-means++ baseline, the five sketch methods and the full SDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// K-means++ seeded Lloyd.
    M0,
    /// Sketch-and-lift.
    M1,
    /// Bias-corrected sketch-and-lift.
    M2,
    /// Weighted sketch-and-lift.
    M3,
    /// Multi-epoch sketch-and-lift.
    M4,
    /// Multi-round weighted sketch-and-lift.
    M5,
    /// SDP on the full data.
    O,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::M0,
        Method::M1,
        Method::M2,
        Method::M3,
        Method::M4,
        Method::M5,
        Method::O,
    ];

    pub fn is_sketch(self) -> bool {
        !matches!(self, Method::M0 | Method::O)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::M0 => "M0",
            Method::M1 => "M1",
            Method::M2 => "M2",
            Method::M3 => "M3",
            Method::M4 => "M4",
            Method::M5 => "M5",
            Method::O => "O",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidInput(format!("unknown method {s:?}; expected M0-M5 or O"))
            })
    }
}

/// Knobs shared by every method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    pub gamma: f64,
    pub sketch_mode: SketchMode,
    pub rounds: usize,
    /// ME-SL block size; `floor(n * gamma)` when `None`.
    pub mesl_block: Option<usize>,
    pub kmeans: KMeansConfig,
    pub solver: SolverConfig,
    pub full_sdp_cap: usize,
    pub relift_sketch: bool,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            sketch_mode: SketchMode::FixedSize,
            rounds: 4,
            mesl_block: None,
            kmeans: KMeansConfig::default(),
            solver: SolverConfig::default(),
            full_sdp_cap: 3000,
            relift_sketch: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub labeling: Labeling,
    /// Total SDP solver iterations (0 for K-means++).
    pub iterations: usize,
    pub converged: bool,
}

/// Runs one method; every random choice is derived from `seed`.
pub fn run_method(
    method: Method,
    data: &DataMatrix,
    k: usize,
    params: &MethodParams,
    seed: u64,
) -> Result<MethodOutcome> {
    let sketch = SketchConfig {
        gamma: params.gamma,
        mode: params.sketch_mode,
        seed,
        solver: params.solver,
        rounding_seed: derive_seed(seed, 0x726f_756e_64),
        relift_sketch: params.relift_sketch,
    };
    let from_sketch = |r: crate::sketch::SketchResult| MethodOutcome {
        labeling: r.labeling,
        iterations: r.solver_iterations,
        converged: r.solver_converged,
    };
    Ok(match method {
        Method::M0 => {
            let fit = kmeans(data, k, &params.kmeans, seed)?;
            MethodOutcome {
                labeling: fit.labeling,
                iterations: 0,
                converged: fit.converged,
            }
        }
        Method::M1 => from_sketch(sl_cluster(data, k, &sketch)?),
        Method::M2 => from_sketch(bcsl_cluster(data, k, &sketch)?),
        Method::M3 => from_sketch(wsl_cluster(data, k, &sketch, None)?),
        Method::M4 => {
            let m = params
                .mesl_block
                .unwrap_or_else(|| fixed_sketch_size(data.n(), params.gamma));
            let r = mesl_cluster(data, k, m, &sketch)?;
            MethodOutcome {
                labeling: r.labeling,
                iterations: r.solver_iterations,
                converged: r.solver_converged,
            }
        }
        Method::M5 => {
            let r = mrwsl_cluster(data, k, &sketch, params.rounds, None)?;
            MethodOutcome {
                iterations: r.rounds.iter().map(|x| x.solver_iterations).sum(),
                converged: r.rounds.iter().all(|x| x.solver_converged) && !r.stopped_early,
                labeling: r.labeling,
            }
        }
        Method::O => {
            if data.n() > params.full_sdp_cap {
                return Err(Error::InvalidInput(format!(
                    "full SDP refused: n = {} exceeds cap {}",
                    data.n(),
                    params.full_sdp_cap
                )));
            }
            from_sketch(full_sdp_cluster(data, k, &sketch)?)
        }
    })
}

/// Which cutoff `λ*` multiplies when setting `Δ² = (λ*)² · cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparationReference {
    #[default]
    Full,
    Sl,
    Bcsl,
}

/// Swept axis of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    P,
    N,
    Gamma,
    LambdaStar,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::P => "p",
            SweepParameter::N => "n",
            SweepParameter::Gamma => "gamma",
            SweepParameter::LambdaStar => "lambda_star",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: OneOrMany<SweepParameter>,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn axis(&self) -> Result<SweepParameter> {
        match &self.parameter {
            OneOrMany::One(p) => Ok(*p),
            OneOrMany::Many(list) if list.len() == 1 => Ok(list[0]),
            OneOrMany::Many(list) => Err(Error::InvalidInput(format!(
                "sweep.parameter: exactly one swept parameter is supported, got {}",
                list.len()
            ))),
        }
    }
}

fn default_k() -> usize {
    4
}
fn default_sigma() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.1
}
fn default_methods() -> Vec<Method> {
    vec![Method::M0, Method::M1]
}
fn default_one() -> usize {
    1
}
fn default_rounds() -> usize {
    4
}
fn default_max_iter() -> usize {
    100
}
fn default_cap() -> usize {
    3000
}
fn default_true() -> bool {
    true
}
fn default_mode() -> SketchMode {
    SketchMode::FixedSize
}

/// A Gaussian-mixture experiment: data design, methods and replicate count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Total sample size; ignored when `sizes` is given.
    pub n: Option<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Relative cluster sizes (default equal); ignored when `sizes` is given.
    pub proportions: Option<Vec<f64>>,
    pub sizes: Option<Vec<usize>>,
    pub p: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// `Δ² = λ*² · cutoff`, cutoff chosen by `separation_reference`.
    pub lambda_star: Option<f64>,
    /// Explicit squared separation; used when `lambda_star` is absent.
    pub delta2: Option<f64>,
    #[serde(default)]
    pub separation_reference: SeparationReference,
    /// Explicit centers (one row per cluster) instead of a regular simplex.
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    pub mesl_block: Option<usize>,
    #[serde(default = "default_mode")]
    pub sketch_mode: SketchMode,
    #[serde(default = "default_one")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_max_iter")]
    pub kmeans_max_iter: usize,
    #[serde(default = "default_cap")]
    pub full_sdp_cap: usize,
    #[serde(default)]
    pub relift_sketch: bool,
    /// Record wall times; when false every `wall_time_s` is written as 0.
    #[serde(default = "default_true")]
    pub timing: bool,
    #[serde(default)]
    pub solver: SolverConfig,
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    /// Minimal config with the given sizes and dimension.
    pub fn new(sizes: Vec<usize>, p: usize) -> Self {
        Self {
            n: None,
            k: sizes.len(),
            proportions: None,
            sizes: Some(sizes),
            p,
            sigma: 1.0,
            lambda_star: None,
            delta2: None,
            separation_reference: SeparationReference::Full,
            centers: None,
            gamma: 0.1,
            methods: default_methods(),
            replicates: 1,
            seed: 0,
            rounds: 4,
            mesl_block: None,
            sketch_mode: SketchMode::FixedSize,
            kmeans_restarts: 1,
            kmeans_max_iter: 100,
            full_sdp_cap: 3000,
            relift_sketch: false,
            timing: true,
            solver: SolverConfig::default(),
            sweep: None,
        }
    }

    /// Cluster sizes: explicit `sizes`, or `n` split by `proportions`
    /// (largest-remainder rounding, default equal split over `k`).
    pub fn cluster_sizes(&self) -> Result<Vec<usize>> {
        if let Some(sizes) = &self.sizes {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(Error::InvalidInput("sizes: every cluster needs >= 1 point".into()));
            }
            return Ok(sizes.clone());
        }
        let n = self
            .n
            .ok_or_else(|| Error::InvalidInput("n: required when sizes is absent".into()))?;
        let props = match &self.proportions {
            Some(p) => p.clone(),
            None => vec![1.0; self.k],
        };
        if props.is_empty() || props.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("proportions: must be positive".into()));
        }
        let total: f64 = props.iter().sum();
        let exact: Vec<f64> = props.iter().map(|w| n as f64 * w / total).collect();
        let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut remaining = n - sizes.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            sizes[i] += 1;
            remaining -= 1;
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "n: {n} points are too few for {} clusters",
                sizes.len()
            )));
        }
        Ok(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = self.cluster_sizes()?;
        if self.proportions.as_ref().is_some_and(|p| p.len() != self.k) && self.sizes.is_none() {
            return Err(Error::InvalidInput("proportions: length must equal k".into()));
        }
        if self.p == 0 {
            return Err(Error::InvalidInput("p: must be >= 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput("sigma: must be >= 0".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidInput("gamma: must lie in (0, 1]".into()));
        }
        let swept_lambda = self
            .sweep
            .as_ref()
            .is_some_and(|s| matches!(s.axis(), Ok(SweepParameter::LambdaStar)));
        if self.lambda_star.is_none() && self.delta2.is_none() && self.centers.is_none() && !swept_lambda {
            return Err(Error::InvalidInput(
                "lambda_star: one of lambda_star, delta2 or centers is required".into(),
            ));
        }
        if self.lambda_star.is_some_and(|l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput("lambda_star: must be >= 0".into()));
        }
        if self.delta2.is_some_and(|d| !(d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidInput("delta2: must be >= 0".into()));
        }
        if self.centers.is_none() && self.p < sizes.len() {
            return Err(Error::InvalidInput(format!(
                "p: simplex layout needs p >= k = {}",
                sizes.len()
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("methods: at least one method is required".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidInput("rounds: must be >= 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates: must be >= 1".into()));
        }
        self.solver
            .validate()
            .map_err(|e| Error::InvalidInput(format!("solver: {e}")))?;
        if let Some(sweep) = &self.sweep {
            sweep.axis()?;
            if sweep.values.is_empty() {
                return Err(Error::InvalidInput("sweep.values: must be non-empty".into()));
            }
        }
        Ok(())
    }

    pub fn threshold_inputs(&self) -> Result<ThresholdInputs> {
        Ok(ThresholdInputs::new(self.cluster_sizes()?, self.p, self.sigma).with_gamma(self.gamma))
    }

    /// Cutoff that `lambda_star` refers to.
    pub fn reference_threshold(&self) -> Result<f64> {
        let inputs = self.threshold_inputs()?;
        match self.separation_reference {
            SeparationReference::Full => threshold_full(&inputs),
            SeparationReference::Sl => {
                threshold_sl(inputs.n(), inputs.k(), self.p, self.sigma, self.gamma)
            }
            SeparationReference::Bcsl => {
                threshold_bcsl(inputs.n(), inputs.n_min(), self.p, self.sigma, self.gamma)
            }
        }
    }

    /// Squared center separation `Δ²`.
    pub fn separation2(&self) -> Result<f64> {
        match (self.lambda_star, self.delta2) {
            (Some(l), _) => Ok(l * l * self.reference_threshold()?),
            (None, Some(d2)) => Ok(d2),
            (None, None) => Err(Error::InvalidInput(
                "lambda_star: one of lambda_star or delta2 is required".into(),
            )),
        }
    }

    pub fn gmm_spec(&self, seed: u64) -> Result<GmmSpec> {
        let sizes = self.cluster_sizes()?;
        let (layout, delta) = match &self.centers {
            Some(c) => (CenterLayout::Explicit(c.clone()), 0.0),
            None => (CenterLayout::RegularSimplex, self.separation2()?.sqrt()),
        };
        let spec = GmmSpec {
            sizes,
            p: self.p,
            sigma: self.sigma,
            delta,
            layout,
            seed,
            stream: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn method_params(&self) -> MethodParams {
        MethodParams {
            gamma: self.gamma,
            sketch_mode: self.sketch_mode,
            rounds: self.rounds,
            mesl_block: self.mesl_block,
            kmeans: KMeansConfig {
                restarts: self.kmeans_restarts,
                max_iter: self.kmeans_max_iter,
            },
            solver: self.solver,
            full_sdp_cap: self.full_sdp_cap,
            relift_sketch: self.relift_sketch,
        }
    }

    /// Copy with the swept parameter set to `value`.
    pub fn at(&self, axis: SweepParameter, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = self.clone();
        cfg.sweep = None;
        match axis {
            SweepParameter::P => cfg.p = as_count("p", value)?,
            SweepParameter::N => {
                let n = as_count("n", value)?;
                if let Some(sizes) = cfg.sizes.take() {
                    cfg.k = sizes.len();
                    cfg.proportions = Some(sizes.iter().map(|&s| s as f64).collect());
                }
                cfg.n = Some(n);
            }
            SweepParameter::Gamma => cfg.gamma = value,
            SweepParameter::LambdaStar => cfg.lambda_star = Some(value),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        derive_seed(self.seed, replicate as u64)
    }
}

fn as_count(name: &str, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value.is_finite() {
        Ok(value as usize)
    } else {
        Err(Error::InvalidInput(format!(
            "sweep.values: {name} must be a positive integer, got {value}"
        )))
    }
}

/// One (method, replicate) outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub gamma: f64,
    pub lambda_star: Option<f64>,
    pub delta2: f64,
    pub sigma: f64,
    pub sizes: Vec<usize>,
    pub replicate: usize,
    pub seed: u64,
    /// Misclassification fraction; NaN when the run failed.
    pub error: f64,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub converged: bool,
    pub failure: Option<String>,
}

pub const RECORD_COLUMNS: [&str; 12] = [
    "method",
    "n",
    "p",
    "k",
    "gamma",
    "lambda_star",
    "sigma",
    "seed",
    "error",
    "wall_time_s",
    "iterations",
    "converged",
];

/// Generates each replicate from its own seed and runs every configured
/// method on it. Replicates run on the current rayon pool; the output is
/// sorted by (method, seed). Failed runs are recorded, not propagated.
pub fn run_replicates(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let sizes = config.cluster_sizes()?;
    let delta2 = match &config.centers {
        Some(_) => f64::NAN,
        None => config.separation2()?,
    };
    let params = config.method_params();

    let per_replicate: Vec<Result<Vec<ResultRecord>>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = config.replicate_seed(r);
            let (data, truth) = generate_gmm(&config.gmm_spec(seed)?)?;
            let method_seed = derive_seed(seed, 1);
            Ok(config
                .methods
                .iter()
                .map(|&method| {
                    let start = Instant::now();
                    let outcome = run_method(method, &data, sizes.len(), &params, method_seed);
                    let elapsed = start.elapsed().as_secs_f64();
                    let base = ResultRecord {
                        method,
                        n: data.n(),
                        p: config.p,
                        k: sizes.len(),
                        gamma: config.gamma,
                        lambda_star: config.lambda_star,
                        delta2,
                        sigma: config.sigma,
                        sizes: sizes.clone(),
                        replicate: r,
                        seed,
                        error: f64::NAN,
                        wall_time_s: if config.timing { elapsed } else { 0.0 },
                        iterations: 0,
                        converged: false,
                        failure: None,
                    };
                    match outcome.and_then(|o| {
                        misclassification_error(&o.labeling, &truth).map(|e| (o, e))
                    }) {
                        Ok((o, error)) => ResultRecord {
                            error,
                            iterations: o.iterations,
                            converged: o.converged,
                            ..base
                        },
                        Err(e) => {
                            warn!("{method} replicate {r} failed: {e}");
                            ResultRecord {
                                failure: Some(e.to_string()),
                                ..base
                            }
                        }
                    }
                })
                .collect())
        })
        .collect();

    let mut records = Vec::new();
    for r in per_replicate {
        records.extend(r?);
    }
    records.sort_by_key(|r| (r.method, r.seed, r.replicate));
    Ok(records)
}

/// Per-method summary of a set of records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Successful runs.
    pub count: usize,
    pub failures: usize,
    pub mean_error: f64,
    /// Standard error of the mean (0 for a single run).
    pub error_bar: f64,
    pub mean_time: f64,
    /// `mean_error`, with exact zero replaced by [`PLOT_ZERO_ERROR`].
    pub plot_error: f64,
}

fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Means and standard errors per method, independent of record order.
pub fn aggregate(records: &[ResultRecord]) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| {
            let runs: Vec<&ResultRecord> = records.iter().filter(|r| r.method == method).collect();
            let ok: Vec<&ResultRecord> = runs.iter().copied().filter(|r| r.failure.is_none()).collect();
            let count = ok.len();
            let errors: Vec<f64> = ok.iter().map(|r| r.error).collect();
            let (mean_error, error_bar) = if count == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let mean = sorted_sum(errors.clone()) / count as f64;
                let bar = if count > 1 {
                    let ss = sorted_sum(errors.iter().map(|e| (e - mean) * (e - mean)).collect());
                    (ss / (count - 1) as f64).sqrt() / (count as f64).sqrt()
                } else {
                    0.0
                };
                (mean, bar)
            };
            let mean_time = if count == 0 {
                f64::NAN
            } else {
                sorted_sum(ok.iter().map(|r| r.wall_time_s).collect()) / count as f64
            };
            MethodSummary {
                method,
                count,
                failures: runs.len() - count,
                mean_error,
                error_bar,
                mean_time,
                plot_error: if mean_error == 0.0 { PLOT_ZERO_ERROR } else { mean_error },
            }
        })
        .collect()
}

/// Aggregated plot data for one grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub parameter: SweepParameter,
    pub x: f64,
    pub delta2: f64,
    pub summary: MethodSummary,
    /// SL cutoff at this grid point, for sketch methods.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<ResultRecord>,
    pub plot: Vec<PlotRow>,
}

/// Runs `run_replicates` at every value of the single swept parameter.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("sweep: section is required".into()))?;
    let axis = sweep.axis()?;
    let mut records = Vec::new();
    let mut plot = Vec::new();
    for &x in &sweep.values {
        let cfg = config.at(axis, x)?;
        let recs = run_replicates(&cfg)?;
        let sizes = cfg.cluster_sizes()?;
        let n: usize = sizes.iter().sum();
        let sl_threshold = threshold_sl(n, sizes.len(), cfg.p, cfg.sigma, cfg.gamma)?;
        let delta2 = match &cfg.centers {
            Some(_) => f64::NAN,
            None => cfg.separation2()?,
        };
        for summary in aggregate(&recs) {
            plot.push(PlotRow {
                parameter: axis,
                x,
                delta2,
                threshold: summary.method.is_sketch().then_some(sl_threshold),
                summary,
            });
        }
        records.extend(recs);
    }
    Ok(SweepOutput { records, plot })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_records_csv<W: Write>(records: &[ResultRecord], out: &mut W) -> Result<()> {
    writeln!(out, "{}", RECORD_COLUMNS.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.n,
            r.p,
            r.k,
            r.gamma,
            fmt_opt(r.lambda_star),
            r.sigma,
            r.seed,
            r.error,
            r.wall_time_s,
            r.iterations,
            r.converged
        )?;
    }
    Ok(())
}

pub const PLOT_COLUMNS: [&str; 11] = [
    "parameter",
    "x",
    "method",
    "delta2",
    "mean_error",
    "plot_error",
    "error_bar",
    "mean_time_s",
    "count",
    "failures",
    "threshold",
];

pub fn write_plot_csv<W: Write>(rows: &[PlotRow], out: &mut W) -> Result<()> {
    writeln!(out, "{}", PLOT_COLUMNS.join(","))?;
    for row in rows {
        let s = &row.summary;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.parameter,
            row.x,
            s.method,
            row.delta2,
            s.mean_error,
            s.plot_error,
            s.error_bar,
            s.mean_time,
            s.count,
            s.failures,
            fmt_opt(row.threshold)
        )?;
    }
    Ok(())
}
