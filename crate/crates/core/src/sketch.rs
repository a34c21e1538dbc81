//! Sketch-and-lift clustering.
//!
//! All methods share one skeleton: pick a sketch `T`, solve the K-means SDP
//! on `T`, round spectrally, compute centroids from the sketch partition and
//! lift every point outside `T` to its nearest centroid. Sketch points keep
//! their SDP labels unless [`SketchConfig::relift_sketch`] is set.
//!
//! Randomness that selects points is keyed by point content (see
//! `keys.rs`), and sketches are processed in key order, so reordering the
//! rows of the input reorders the output labels and nothing else.

use std::collections::HashSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::dataset::{DataMatrix, Labeling};
use crate::error::{Error, Result};
use crate::keys::{canonical_order, derive_seed, mix64, point_keys, unit_interval};
use crate::kmeans::{kmeans, nearest_centroid_assign, squared_distance, Centroids, KMeansConfig};
use crate::rounding::spectral_round;
use crate::sdp::{affinity, solve_kmeans_sdp, SdpSolution, SolverConfig};

const BERNOULLI_SALT: u64 = 0x6265_726e_6f75_6c6c;
const BCSL_SALT: u64 = 0x6263_736c_646f_776e;
const PILOT_STREAM: u64 = 0x7069_6c6f_74;
const EPOCH_STRIDE: u64 = 0x9e37_79b9_7f4a_7c15;

/// How the sketch `T` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchMode {
    /// Each point `i` joins `T` independently with probability `w_i`.
    Bernoulli,
    /// Exactly `floor(n * gamma)` points without replacement (uniform weights only).
    FixedSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    /// Subsampling factor in `(0, 1]`.
    pub gamma: f64,
    pub mode: SketchMode,
    /// Seeds sketch membership, block partitions and down-sampling.
    pub seed: u64,
    pub solver: SolverConfig,
    /// Seeds the K-means restarts inside spectral rounding.
    pub rounding_seed: u64,
    /// Re-assign sketch points by nearest centroid too (off: they keep SDP labels).
    pub relift_sketch: bool,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            mode: SketchMode::FixedSize,
            seed: 0,
            solver: SolverConfig::default(),
            rounding_seed: 0,
            relift_sketch: false,
        }
    }
}

impl SketchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        self.solver.validate()
    }
}

/// Per-point sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidInput(format!(
                "sampling weight {w} outside [0, 1]"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![gamma; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }

    /// Expected sketch size `sum_i w_i`.
    pub fn expected_size(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// `w_i = gamma * n / (K * n_k)` for `i` in cluster `k`, clipped to `[0, 1]`.
///
/// `K` is `labeling.k()`. The flag reports whether any weight was clipped.
pub fn size_adaptive_weights(labeling: &Labeling, gamma: f64) -> Result<(WeightVector, bool)> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    let sizes = labeling.sizes();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster { cluster: empty });
    }
    let n = labeling.n() as f64;
    let k = labeling.k() as f64;
    let mut clipped = false;
    let weights = labeling
        .assignments()
        .iter()
        .map(|&c| {
            let w = gamma * n / (k * sizes[c] as f64);
            if w > 1.0 {
                clipped = true;
                1.0
            } else {
                w
            }
        })
        .collect();
    Ok((WeightVector(weights), clipped))
}

/// `floor(n * gamma)`, tolerant of products like `0.29 * 100 = 28.999...`.
pub fn fixed_sketch_size(n: usize, gamma: f64) -> usize {
    ((n as f64) * gamma + 1e-9).floor() as usize
}

fn sketch_from_keys(keys: &[u64], weights: &WeightVector, mode: SketchMode) -> Result<Vec<usize>> {
    if weights.len() != keys.len() {
        return Err(Error::DimensionMismatch {
            expected: keys.len(),
            actual: weights.len(),
        });
    }
    let order = canonical_order(keys);
    match mode {
        SketchMode::FixedSize => {
            if !weights.is_uniform() {
                return Err(Error::InvalidInput(
                    "fixed-size sketches need uniform weights; use bernoulli".into(),
                ));
            }
            let gamma = weights.as_slice().first().copied().unwrap_or(0.0);
            let size = fixed_sketch_size(keys.len(), gamma).min(keys.len());
            Ok(order[..size].to_vec())
        }
        SketchMode::Bernoulli => Ok(order
            .into_iter()
            .filter(|&i| unit_interval(mix64(keys[i] ^ BERNOULLI_SALT)) < weights.as_slice()[i])
            .collect()),
    }
}

/// Draws the sketch index set `T`, listed in key order.
pub fn sketch_indices(
    data: &DataMatrix,
    weights: &WeightVector,
    mode: SketchMode,
    seed: u64,
) -> Result<Vec<usize>> {
    sketch_from_keys(&point_keys(data, seed), weights, mode)
}

/// Outcome of one sketch-and-lift pass.
#[derive(Debug, Clone)]
pub struct SketchResult {
    pub labeling: Labeling,
    /// Sketch indices in processing order.
    pub sketch: Vec<usize>,
    /// SDP partition of the sketch, aligned with `sketch`.
    pub sketch_labels: Labeling,
    pub centroids: Centroids,
    /// Number of sketch points averaged into each centroid.
    pub centroid_support: Vec<usize>,
    pub weights: WeightVector,
    pub weights_clipped: bool,
    pub solver_iterations: usize,
    pub solver_converged: bool,
}

struct SketchSolve {
    labels: Labeling,
    solution: SdpSolution,
}

fn solve_and_round(
    data: &DataMatrix,
    indices: &[usize],
    k: usize,
    solver: &SolverConfig,
    rounding_seed: u64,
) -> Result<SketchSolve> {
    if indices.len() < k {
        return Err(Error::SketchTooSmall {
            sketch_size: indices.len(),
            nonempty: 0,
            k,
        });
    }
    let sketch = data.select(indices);
    let solution = solve_kmeans_sdp(&affinity(&sketch), k, solver)?;
    let labels = spectral_round(solution.z.matrix(), k, rounding_seed)?;
    let nonempty = labels.nonempty_clusters();
    if nonempty < k {
        return Err(Error::SketchTooSmall {
            sketch_size: indices.len(),
            nonempty,
            k,
        });
    }
    Ok(SketchSolve { labels, solution })
}

/// Sketch point indices of each cluster, in sketch order.
fn groups_of(sketch: &[usize], labels: &Labeling) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); labels.k()];
    for (pos, &i) in sketch.iter().enumerate() {
        groups[labels.label(pos)].push(i);
    }
    groups
}

fn lift(
    data: &DataMatrix,
    sketch: &[usize],
    sketch_labels: &Labeling,
    centroids: &Centroids,
    relift_sketch: bool,
) -> Result<Labeling> {
    let lifted = nearest_centroid_assign(data, centroids)?;
    if relift_sketch {
        return Ok(lifted);
    }
    let mut labels = lifted.assignments().to_vec();
    for (pos, &i) in sketch.iter().enumerate() {
        labels[i] = sketch_labels.label(pos);
    }
    Labeling::new(labels, centroids.k())
}

#[derive(Clone, Copy)]
enum CentroidRule {
    AllSketchPoints,
    /// Down-sample every sketch cluster to the smallest cluster size.
    Balanced,
}

fn run_sketch(
    data: &DataMatrix,
    k: usize,
    weights: WeightVector,
    weights_clipped: bool,
    mode: SketchMode,
    config: &SketchConfig,
    rule: CentroidRule,
) -> Result<SketchResult> {
    config.solver.validate()?;
    if k == 0 {
        return Err(Error::InvalidInput("cluster count must be >= 1".into()));
    }
    let keys = point_keys(data, config.seed);
    let sketch = sketch_from_keys(&keys, &weights, mode)?;
    let solved = solve_and_round(data, &sketch, k, &config.solver, config.rounding_seed)?;
    let mut groups = groups_of(&sketch, &solved.labels);

    if let CentroidRule::Balanced = rule {
        let smallest = groups.iter().map(Vec::len).min().unwrap_or(0);
        if smallest == 0 {
            return Err(Error::SketchTooSmall {
                sketch_size: sketch.len(),
                nonempty: solved.labels.nonempty_clusters(),
                k,
            });
        }
        for group in &mut groups {
            if group.len() > smallest {
                let mut ranked: Vec<(u64, usize)> = group
                    .iter()
                    .map(|&i| (mix64(keys[i] ^ BCSL_SALT), i))
                    .collect();
                ranked.sort_unstable();
                let keep: HashSet<usize> = ranked[..smallest].iter().map(|&(_, i)| i).collect();
                group.retain(|i| keep.contains(i));
            }
        }
    }

    let centroids = Centroids::from_groups(data, &groups)?;
    let labeling = lift(data, &sketch, &solved.labels, &centroids, config.relift_sketch)?;
    Ok(SketchResult {
        labeling,
        centroid_support: groups.iter().map(Vec::len).collect(),
        sketch,
        sketch_labels: solved.labels,
        centroids,
        weights,
        weights_clipped,
        solver_iterations: solved.solution.iterations,
        solver_converged: solved.solution.converged,
    })
}

/// The SDP on all points followed by spectral rounding (no sketch, no lift).
///
/// Points are processed in the same key order the sketch methods use, so
/// this is exactly [`sl_cluster`] at `gamma = 1` with the same seeds.
pub fn full_sdp_cluster(data: &DataMatrix, k: usize, config: &SketchConfig) -> Result<SketchResult> {
    config.solver.validate()?;
    let keys = point_keys(data, config.seed);
    let order = canonical_order(&keys);
    let solved = solve_and_round(data, &order, k, &config.solver, config.rounding_seed)?;
    let groups = groups_of(&order, &solved.labels);
    let centroids = Centroids::from_groups(data, &groups)?;
    let mut labels = vec![0; data.n()];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = solved.labels.label(pos);
    }
    Ok(SketchResult {
        labeling: Labeling::new(labels, k)?,
        centroid_support: groups.iter().map(Vec::len).collect(),
        sketch: order,
        sketch_labels: solved.labels,
        centroids,
        weights: WeightVector::uniform(data.n(), 1.0)?,
        weights_clipped: false,
        solver_iterations: solved.solution.iterations,
        solver_converged: solved.solution.converged,
    })
}

/// Sketch-and-lift with uniform weights `gamma`.
pub fn sl_cluster(data: &DataMatrix, k: usize, config: &SketchConfig) -> Result<SketchResult> {
    config.validate()?;
    let weights = WeightVector::uniform(data.n(), config.gamma)?;
    run_sketch(data, k, weights, false, config.mode, config, CentroidRule::AllSketchPoints)
}

/// Bias-corrected sketch-and-lift: centroids average equally many sketch points.
pub fn bcsl_cluster(data: &DataMatrix, k: usize, config: &SketchConfig) -> Result<SketchResult> {
    config.validate()?;
    let weights = WeightVector::uniform(data.n(), config.gamma)?;
    run_sketch(data, k, weights, false, config.mode, config, CentroidRule::Balanced)
}

/// Lloyd/K-means++ pilot partition used by WSL when no warm start is given.
pub fn pilot_partition(data: &DataMatrix, k: usize, seed: u64) -> Result<Labeling> {
    let order = canonical_order(&point_keys(data, seed));
    let ordered = data.select(&order);
    let fit = kmeans(&ordered, k, &KMeansConfig::default(), derive_seed(seed, PILOT_STREAM))?;
    let mut labels = vec![0; data.n()];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = fit.labeling.label(pos);
    }
    Labeling::new(labels, k)
}

fn check_partition(data: &DataMatrix, k: usize, partition: &Labeling) -> Result<()> {
    if partition.n() != data.n() {
        return Err(Error::DimensionMismatch {
            expected: data.n(),
            actual: partition.n(),
        });
    }
    if partition.k() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: partition.k(),
        });
    }
    if let Some(c) = partition.sizes().iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster { cluster: c });
    }
    Ok(())
}

fn weighted_pass(
    data: &DataMatrix,
    k: usize,
    config: &SketchConfig,
    partition: &Labeling,
) -> Result<SketchResult> {
    check_partition(data, k, partition)?;
    let (weights, clipped) = size_adaptive_weights(partition, config.gamma)?;
    if clipped {
        warn!("sampling weights clipped to 1 (gamma = {})", config.gamma);
    }
    run_sketch(
        data,
        k,
        weights,
        clipped,
        SketchMode::Bernoulli,
        config,
        CentroidRule::AllSketchPoints,
    )
}

/// Weighted sketch-and-lift: Bernoulli sketch with size-adaptive weights
/// from a pilot partition (`warm_start`, or K-means++/Lloyd when `None`).
pub fn wsl_cluster(
    data: &DataMatrix,
    k: usize,
    config: &SketchConfig,
    warm_start: Option<&Labeling>,
) -> Result<SketchResult> {
    config.validate()?;
    let pilot = match warm_start {
        Some(l) => l.clone(),
        None => pilot_partition(data, k, config.seed)?,
    };
    weighted_pass(data, k, config, &pilot)
}

#[derive(Debug, Clone)]
pub struct MrWslResult {
    /// Labeling of the last completed round.
    pub labeling: Labeling,
    /// One entry per completed round; `rounds[r].weights` are the weights used in round `r + 1`.
    pub rounds: Vec<SketchResult>,
    /// Set when a round failed and the previous round's labeling was returned.
    pub stopped_early: bool,
}

/// Multi-round WSL: each round re-derives the weights from the previous
/// round's partition sizes.
///
/// Every round reuses the same seeds, so point `i` draws the same uniform in
/// each round and only its weight changes. Once the weights stop changing the
/// rounds repeat exactly.
pub fn mrwsl_cluster(
    data: &DataMatrix,
    k: usize,
    config: &SketchConfig,
    rounds: usize,
    warm_start: Option<&Labeling>,
) -> Result<MrWslResult> {
    if rounds == 0 {
        return Err(Error::InvalidInput("rounds must be >= 1".into()));
    }
    let first = wsl_cluster(data, k, config, warm_start)?;
    let mut history = vec![first];
    let mut stopped_early = false;
    for round in 1..rounds {
        let previous = &history[round - 1].labeling;
        match weighted_pass(data, k, config, previous) {
            Ok(result) => history.push(result),
            Err(e) => {
                warn!("MR-WSL round {} failed: {e}; keeping round {}", round + 1, round);
                stopped_early = true;
                break;
            }
        }
    }
    Ok(MrWslResult {
        labeling: history.last().expect("round 1 succeeded").labeling.clone(),
        rounds: history,
        stopped_early,
    })
}

#[derive(Debug, Clone)]
pub struct MeslResult {
    pub labeling: Labeling,
    /// Aligned, averaged centroids.
    pub centroids: Centroids,
    /// Number of blocks `floor(n / m)`.
    pub epochs: usize,
    pub failed_epochs: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
    pub solver_iterations: usize,
    pub solver_converged: bool,
}

/// Reorders `centroids` to best match `reference` (minimum total squared distance).
pub fn align_centroids(reference: &Centroids, centroids: &Centroids) -> Result<Centroids> {
    let k = reference.k();
    if centroids.k() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: centroids.k(),
        });
    }
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| squared_distance(reference.center(a), centroids.center(b)))
                .collect()
        })
        .collect();
    let perm = min_cost_assignment(&cost)?;
    let rows: Vec<usize> = perm.to_vec();
    Ok(Centroids::new(centroids.as_data().select(&rows)))
}

/// Multi-epoch SL: split the points into `floor(n/m)` random blocks of size
/// `m`, solve and round each, align the per-block centroids to the first
/// successful block and average them, then lift all `n` points.
pub fn mesl_cluster(data: &DataMatrix, k: usize, m: usize, config: &SketchConfig) -> Result<MeslResult> {
    config.solver.validate()?;
    if m < k || m == 0 {
        return Err(Error::InvalidInput(format!(
            "block size m = {m} must be at least k = {k}"
        )));
    }
    let epochs = data.n() / m;
    if epochs == 0 {
        return Err(Error::InvalidInput(format!(
            "block size m = {m} exceeds n = {}",
            data.n()
        )));
    }
    let order = canonical_order(&point_keys(data, config.seed));
    let blocks: Vec<Vec<usize>> = order.chunks(m).take(epochs).map(<[usize]>::to_vec).collect();

    let outcomes: Vec<Result<(Centroids, SdpSolution)>> = blocks
        .par_iter()
        .enumerate()
        .map(|(s, block)| {
            let seed = config.rounding_seed.wrapping_add((s as u64).wrapping_mul(EPOCH_STRIDE));
            let solved = solve_and_round(data, block, k, &config.solver, seed)?;
            let centroids = Centroids::from_groups(data, &groups_of(block, &solved.labels))?;
            Ok((centroids, solved.solution))
        })
        .collect();

    let mut failed_epochs = Vec::new();
    let mut successes = Vec::new();
    for (s, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(ok) => successes.push(ok),
            Err(e) => {
                warn!("ME-SL epoch {s} dropped: {e}");
                failed_epochs.push(s);
            }
        }
    }
    if successes.is_empty() {
        return Err(Error::AllEpochsFailed { epochs });
    }

    let reference = successes[0].0.clone();
    let p = data.p();
    let mut sum = vec![0.0; k * p];
    let mut solver_iterations = 0;
    let mut solver_converged = true;
    for (centroids, solution) in &successes {
        let aligned = align_centroids(&reference, centroids)?;
        for (s, v) in sum.iter_mut().zip(aligned.as_data().as_slice()) {
            *s += v;
        }
        solver_iterations += solution.iterations;
        solver_converged &= solution.converged;
    }
    let count = successes.len() as f64;
    let averaged = Centroids::new(DataMatrix::new(
        k,
        p,
        sum.into_iter().map(|s| s / count).collect(),
    )?);
    let labeling = nearest_centroid_assign(data, &averaged)?;
    Ok(MeslResult {
        labeling,
        centroids: averaged,
        epochs,
        failed_epochs,
        blocks,
        solver_iterations,
        solver_converged,
    })
}
