//! K-means++ seeding, Lloyd's algorithm and nearest-centroid assignment.
//!
//! Lloyd's algorithm here never returns an empty cluster when `k <= n`: an
//! empty cluster is reseeded at the point farthest from its current center
//! (taken from a cluster that keeps at least one point). Distance ties
//! always go to the lowest cluster index.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{substream_rng, DataMatrix, Labeling};
use crate::error::{Error, Result};

/// `k` cluster centers in `R^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    centers: DataMatrix,
}

impl Centroids {
    pub fn new(centers: DataMatrix) -> Self {
        Self { centers }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::new(DataMatrix::from_rows(rows)?))
    }

    pub fn k(&self) -> usize {
        self.centers.n()
    }

    pub fn p(&self) -> usize {
        self.centers.p()
    }

    pub fn center(&self, l: usize) -> &[f64] {
        self.centers.row(l)
    }

    pub fn as_data(&self) -> &DataMatrix {
        &self.centers
    }

    /// Means of the given index groups; groups are summed in the order given.
    pub fn from_groups(data: &DataMatrix, groups: &[Vec<usize>]) -> Result<Self> {
        let p = data.p();
        let mut values = Vec::with_capacity(groups.len() * p);
        for (c, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::EmptyCluster { cluster: c });
            }
            let mut sum = vec![0.0; p];
            for &i in group {
                for (s, v) in sum.iter_mut().zip(data.row(i)) {
                    *s += v;
                }
            }
            values.extend(sum.iter().map(|s| s / group.len() as f64));
        }
        Ok(Self::new(DataMatrix::new(groups.len(), p, values)?))
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest center; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &Centroids) -> (usize, f64) {
    let mut best = (0, squared_distance(point, centroids.center(0)));
    for l in 1..centroids.k() {
        let d = squared_distance(point, centroids.center(l));
        if d < best.1 {
            best = (l, d);
        }
    }
    best
}

/// Assigns every point to its closest centroid (lowest index on ties).
pub fn nearest_centroid_assign(data: &DataMatrix, centroids: &Centroids) -> Result<Labeling> {
    if centroids.p() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            actual: centroids.p(),
        });
    }
    let labels = data.rows().map(|x| nearest(x, centroids).0).collect();
    Labeling::new(labels, centroids.k())
}

/// D² sampling probabilities: squared distance to the nearest chosen
/// center, normalized to sum to one. `None` when every point coincides with
/// a chosen center.
pub fn d2_weights(data: &DataMatrix, chosen: &[&[f64]]) -> Option<Vec<f64>> {
    let raw: Vec<f64> = data
        .rows()
        .map(|x| {
            chosen
                .iter()
                .map(|c| squared_distance(x, c))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        Some(raw.into_iter().map(|d| d / total).collect())
    } else {
        None
    }
}

/// K-means++ seeding with a caller-provided generator.
pub fn kmeanspp_init_with_rng<R: Rng>(data: &DataMatrix, k: usize, rng: &mut R) -> Result<Centroids> {
    let n = data.n();
    if k == 0 {
        return Err(Error::InvalidInput("cluster count must be >= 1".into()));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let mut chosen = vec![rng.random_range(0..n)];
    // running minimum of squared distances to the chosen set
    let mut dist: Vec<f64> = data
        .rows()
        .map(|x| squared_distance(x, data.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if *d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final partial sum
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), data.row(next)));
        }
    }
    Ok(Centroids::new(data.select(&chosen)))
}

/// K-means++ seeding from a seed.
pub fn kmeanspp_init(data: &DataMatrix, k: usize, seed: u64) -> Result<Centroids> {
    kmeanspp_init_with_rng(data, k, &mut substream_rng(seed, 0))
}

#[derive(Debug, Clone)]
pub struct LloydResult {
    pub labeling: Labeling,
    pub centroids: Centroids,
    /// Within-cluster sum of squared distances to the returned centroids.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each center update.
    pub objective_trace: Vec<f64>,
}

fn within_cluster_ss(data: &DataMatrix, labels: &[usize], centroids: &Centroids) -> f64 {
    data.rows()
        .zip(labels)
        .map(|(x, &l)| squared_distance(x, centroids.center(l)))
        .sum()
}

fn cluster_means(data: &DataMatrix, labels: &[usize], previous: &Centroids) -> Centroids {
    let k = previous.k();
    let p = data.p();
    let mut sums = vec![0.0; k * p];
    let mut counts = vec![0usize; k];
    for (x, &l) in data.rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l * p..(l + 1) * p].iter_mut().zip(x) {
            *s += v;
        }
    }
    for l in 0..k {
        if counts[l] == 0 {
            sums[l * p..(l + 1) * p].copy_from_slice(previous.center(l));
        } else {
            sums[l * p..(l + 1) * p]
                .iter_mut()
                .for_each(|s| *s /= counts[l] as f64);
        }
    }
    Centroids::new(DataMatrix::new(k, p, sums).expect("means of finite data are finite"))
}

/// Moves the farthest point of a multi-point cluster into each empty cluster.
fn repair_empty(data: &DataMatrix, labels: &mut [usize], centroids: &mut Centroids) {
    let k = centroids.k();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let d = squared_distance(data.row(i), centroids.center(l));
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let Some((i, _)) = best else { return };
        counts[labels[i]] -= 1;
        counts[empty] += 1;
        labels[i] = empty;
        let p = data.p();
        let mut values = centroids.as_data().as_slice().to_vec();
        values[empty * p..(empty + 1) * p].copy_from_slice(data.row(i));
        *centroids = Centroids::new(DataMatrix::new(k, p, values).expect("finite"));
    }
}

fn assign_labels(data: &DataMatrix, centroids: &Centroids) -> Vec<usize> {
    data.rows().map(|x| nearest(x, centroids).0).collect()
}

/// Lloyd iterations from `init` until the assignment stops changing or
/// `max_iter` center updates have been made.
pub fn lloyd(data: &DataMatrix, k: usize, init: &Centroids, max_iter: usize) -> Result<LloydResult> {
    if init.k() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: init.k(),
        });
    }
    if init.p() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            actual: init.p(),
        });
    }
    if k > data.n() {
        return Err(Error::TooManyClusters { k, n: data.n() });
    }

    let mut centroids = init.clone();
    let mut labels = assign_labels(data, &centroids);
    repair_empty(data, &mut labels, &mut centroids);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        centroids = cluster_means(data, &labels, &centroids);
        trace.push(within_cluster_ss(data, &labels, &centroids));
        let mut next = assign_labels(data, &centroids);
        repair_empty(data, &mut next, &mut centroids);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    if !converged {
        centroids = cluster_means(data, &labels, &centroids);
    }

    let objective = within_cluster_ss(data, &labels, &centroids);
    Ok(LloydResult {
        labeling: Labeling::new(labels, k)?,
        centroids,
        objective,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Restart and iteration budget for seeded K-means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 1,
            max_iter: 100,
        }
    }
}

/// K-means++ followed by Lloyd, best objective over `config.restarts` runs.
pub fn kmeans(data: &DataMatrix, k: usize, config: &KMeansConfig, seed: u64) -> Result<LloydResult> {
    let mut best: Option<LloydResult> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = substream_rng(seed, restart as u64);
        let init = kmeanspp_init_with_rng(data, k, &mut rng)?;
        let run = lloyd(data, k, &init, config.max_iter)?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> DataMatrix {
        DataMatrix::new(points.len(), 1, points.to_vec()).unwrap()
    }

    #[test]
    fn kmeanspp_with_k_equal_n_picks_every_point() {
        let data = DataMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 3.0],
            vec![5.0, 5.0],
        ])
        .unwrap();
        for seed in 0..20 {
            let c = kmeanspp_init(&data, 4, seed).unwrap();
            let mut rows: Vec<Vec<f64>> = (0..4).map(|l| c.center(l).to_vec()).collect();
            rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut expected: Vec<Vec<f64>> = data.rows().map(<[f64]>::to_vec).collect();
            expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(rows, expected);
        }
    }

    #[test]
    fn kmeanspp_identical_points() {
        let data = line(&[2.5; 6]);
        let c = kmeanspp_init(&data, 3, 1).unwrap();
        assert!(c.as_data().as_slice().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn kmeanspp_rejects_too_many_clusters() {
        assert!(matches!(
            kmeanspp_init(&line(&[1.0, 2.0]), 3, 0),
            Err(Error::TooManyClusters { k: 3, n: 2 })
        ));
    }

    #[test]
    fn d2_weights_normalize() {
        let data = line(&[0.0, 1.0, 4.0, 9.0]);
        let chosen = [data.row(0)];
        let w = d2_weights(&data, &chosen).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[0], 0.0);
        assert!(d2_weights(&line(&[1.0, 1.0]), &[&[1.0]]).is_none());
    }

    #[test]
    fn lloyd_single_cluster_is_global_mean() {
        let data = line(&[1.0, 2.0, 6.0]);
        let init = Centroids::new(line(&[6.0]));
        let r = lloyd(&data, 1, &init, 100).unwrap();
        assert_eq!(r.centroids.center(0), &[3.0]);
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
    }

    #[test]
    fn lloyd_k_equal_n_has_zero_objective() {
        let data = line(&[0.0, 3.0, 7.0]);
        let init = kmeanspp_init(&data, 3, 4).unwrap();
        let r = lloyd(&data, 3, &init, 100).unwrap();
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn lloyd_on_two_pairs_from_any_point_init() {
        // Brute force over the 7 bipartitions of {0,1,9,10}: best is {0,1},{9,10} at 1.0.
        let pts = [0.0, 1.0, 9.0, 10.0];
        let data = line(&pts);
        let mut best = f64::INFINITY;
        for mask in 1u32..15 {
            let ss: f64 = [true, false]
                .iter()
                .map(|&inside| {
                    let g: Vec<f64> = (0..4)
                        .filter(|&i| ((mask >> i) & 1 == 1) == inside)
                        .map(|i| pts[i])
                        .collect();
                    let m = g.iter().sum::<f64>() / g.len() as f64;
                    g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
                })
                .sum();
            best = best.min(ss);
        }
        assert_eq!(best, 1.0);

        for a in 0..4 {
            for b in 0..4 {
                let init = Centroids::new(line(&[pts[a], pts[b]]));
                let r = lloyd(&data, 2, &init, 100).unwrap();
                assert!((r.objective - 1.0).abs() < 1e-12, "init ({a},{b})");
                let expected = Labeling::new(vec![0, 0, 1, 1], 2).unwrap();
                assert!(r.labeling.same_partition(&expected));
            }
        }
    }

    #[test]
    fn assignment_exact_hit_and_ties() {
        let centroids = Centroids::from_rows(&[vec![0.0], vec![2.0], vec![5.0]]).unwrap();
        let data = line(&[5.0, 1.0]);
        let l = nearest_centroid_assign(&data, &centroids).unwrap();
        assert_eq!(l.assignments(), &[2, 0]);
    }

    #[test]
    fn assignment_checks_dimension() {
        let centroids = Centroids::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(nearest_centroid_assign(&line(&[1.0]), &centroids).is_err());
    }

    #[test]
    fn empty_clusters_are_repaired() {
        let data = line(&[0.0, 0.1, 0.2, 10.0]);
        let init = Centroids::new(line(&[0.0, 100.0, 200.0]));
        let r = lloyd(&data, 3, &init, 100).unwrap();
        assert_eq!(r.labeling.nonempty_clusters(), 3);
    }
}
