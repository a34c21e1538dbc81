//! The K-means SDP
//!
//! ```text
//! maximize <A, Z>  subject to  Z ⪰ 0,  tr Z = K,  Z 1 = 1,  Z >= 0
//! ```
//!
//! solved with a two-block ADMM on the splitting `X = Y`, `X = W`, where
//! `X` lives in the affine set `{Z = Zᵀ, Z 1 = 1, tr Z = K}`, `Y` in the PSD
//! cone and `W` in the nonnegative orthant. Each block update is an exact
//! projection: a closed-form linear correction for the affine set,
//! eigenvalue clipping for the cone and entrywise clipping for the orthant.
//! `A` is divided by its Frobenius norm before solving; reported objectives
//! are in the original scale.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{DataMatrix, Labeling};
use crate::error::{Error, Result};

/// Gram matrix of the globally mean-centered rows: `A_ij = <X_i - x̄, X_j - x̄>`.
pub fn affinity(data: &DataMatrix) -> DMatrix<f64> {
    let (n, p) = (data.n(), data.p());
    let mean = data.column_means();
    let centered = DMatrix::from_fn(n, p, |i, j| data.row(i)[j] - mean[j]);
    let mut a = &centered * centered.transpose();
    for i in 0..n {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    a
}

/// A candidate SDP variable together with its trace target `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    z: DMatrix<f64>,
    k: usize,
}

impl MembershipMatrix {
    pub fn new(z: DMatrix<f64>, k: usize) -> Result<Self> {
        if !z.is_square() {
            return Err(Error::NotSquare {
                rows: z.nrows(),
                cols: z.ncols(),
            });
        }
        Ok(Self { z, k })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.z
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn size(&self) -> usize {
        self.z.nrows()
    }

    pub fn feasibility(&self) -> FeasibilityReport {
        check_feasibility(&self.z, self.k).expect("membership matrices are square")
    }
}

/// Block-diagonal membership matrix: `1/n_k` inside cluster `k`, zero elsewhere.
pub fn ideal_membership(labeling: &Labeling) -> MembershipMatrix {
    let sizes = labeling.sizes();
    let n = labeling.n();
    let z = DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (labeling.label(i), labeling.label(j));
        if a == b {
            1.0 / sizes[a] as f64
        } else {
            0.0
        }
    });
    MembershipMatrix {
        z,
        k: labeling.nonempty_clusters(),
    }
}

/// Worst-case violation of each constraint of the SDP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    pub symmetry: f64,
    pub nonnegativity: f64,
    pub row_sums: f64,
    pub trace: f64,
    /// `max(0, -λ_min)` of the symmetric part.
    pub min_eigenvalue: f64,
}

impl FeasibilityReport {
    pub fn max_violation(&self) -> f64 {
        [
            self.symmetry,
            self.nonnegativity,
            self.row_sums,
            self.trace,
            self.min_eigenvalue,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

pub fn check_feasibility(z: &DMatrix<f64>, k: usize) -> Result<FeasibilityReport> {
    if !z.is_square() {
        return Err(Error::NotSquare {
            rows: z.nrows(),
            cols: z.ncols(),
        });
    }
    let m = z.nrows();
    let mut symmetry: f64 = 0.0;
    let mut nonnegativity: f64 = 0.0;
    let mut row_sums: f64 = 0.0;
    for i in 0..m {
        let mut sum = 0.0;
        for j in 0..m {
            let v = z[(i, j)];
            sum += v;
            symmetry = symmetry.max((v - z[(j, i)]).abs());
            nonnegativity = nonnegativity.max(-v);
        }
        row_sums = row_sums.max((sum - 1.0).abs());
    }
    let trace = (z.trace() - k as f64).abs();
    let min_eigenvalue = if m == 0 {
        0.0
    } else {
        let eig = eigen(symmetrize(z))?;
        (-eig.eigenvalues.min()).max(0.0)
    };
    Ok(FeasibilityReport {
        symmetry,
        nonnegativity,
        row_sums,
        trace,
        min_eigenvalue,
    })
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric QR iteration did not converge".into()))
}

/// Euclidean projection onto the positive semidefinite cone (of the
/// symmetric part of `m`).
pub fn project_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = eigen(symmetrize(m))?;
    let mut v = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let scale = lambda.max(0.0).sqrt();
        v.column_mut(j).scale_mut(scale);
    }
    let mut out = &v * v.transpose();
    let n = out.nrows();
    for i in 0..n {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    Ok(out)
}

/// Euclidean projection onto `{Z = Zᵀ, Z 1 = 1, tr Z = k}` (needs `m >= 2`).
///
/// After symmetrizing to `S`, the KKT conditions give
/// `Z = S + (y 1ᵀ + 1 yᵀ)/2 + t I` with
/// `t = (k - tr S - 1 + 1ᵀS1/m) / (m - 1)`,
/// `c = 1 - 1ᵀS1/m - t` and `y = (2/m)(1 - S1 - (c/2 + t) 1)`.
pub fn project_affine(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut s = symmetrize(m);
    let nf = n as f64;
    let row: Vec<f64> = (0..n).map(|i| s.row(i).sum()).collect();
    let total: f64 = row.iter().sum();
    let t = (k as f64 - s.trace() - 1.0 + total / nf) / (nf - 1.0);
    let c = 1.0 - total / nf - t;
    let y: Vec<f64> = row
        .iter()
        .map(|r| (2.0 / nf) * (1.0 - r - (c / 2.0 + t)))
        .collect();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] += 0.5 * (y[i] + y[j]);
        }
        s[(i, i)] += t;
    }
    s
}

fn project_nonnegative(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

/// Feasible point `a I + b 11ᵀ` with `a = (k-1)/(m-1)`; optimal when `A` is constant.
fn central_point(m: usize, k: usize) -> DMatrix<f64> {
    if m == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let a = (k as f64 - 1.0) / (m as f64 - 1.0);
    let b = (1.0 - a) / m as f64;
    DMatrix::from_fn(m, m, |i, j| if i == j { a + b } else { b })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Relative primal and dual residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
    /// Residual balancing: rescale `rho` when one residual dominates.
    pub adaptive_rho: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            tol: 1e-5,
            max_iter: 10_000,
            verbose: false,
            adaptive_rho: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidInput(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidInput(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub z: MembershipMatrix,
    /// `<A, Z>` in the original scale of `A`.
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

impl SdpSolution {
    /// `key=value` diagnostic lines.
    pub fn diagnostics(&self) -> String {
        format!(
            "objective={}\niterations={}\nprimal_residual={:e}\ndual_residual={:e}\nconverged={}",
            self.objective, self.iterations, self.primal_residual, self.dual_residual, self.converged
        )
    }

    fn closed_form(a: &DMatrix<f64>, z: DMatrix<f64>, k: usize) -> Self {
        let objective = a.dot(&z);
        SdpSolution {
            z: MembershipMatrix { z, k },
            objective,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
        }
    }
}

const RHO_CHECK_START: usize = 20;

fn frob2(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

fn diff2(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Maximizes `<A, Z>` over the K-means SDP feasible set.
///
/// Hitting `max_iter` is not an error: the last iterate is returned with
/// `converged = false`. The returned matrix is the affine-block iterate, so
/// it satisfies the symmetry, row-sum and trace constraints to rounding
/// error; cone and sign violations are bounded by the primal residual.
pub fn solve_kmeans_sdp(a: &DMatrix<f64>, k: usize, config: &SolverConfig) -> Result<SdpSolution> {
    config.validate()?;
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let m = a.nrows();
    if k == 0 {
        return Err(Error::InvalidInput("cluster count must be >= 1".into()));
    }
    if k > m {
        return Err(Error::TooManyClusters { k, n: m });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("affinity matrix has non-finite entries".into()));
    }
    let a = symmetrize(a);

    if k == 1 {
        return Ok(SdpSolution::closed_form(
            &a,
            DMatrix::from_element(m, m, 1.0 / m as f64),
            k,
        ));
    }
    if k == m {
        return Ok(SdpSolution::closed_form(&a, DMatrix::identity(m, m), k));
    }
    let norm = a.norm();
    if norm == 0.0 {
        return Ok(SdpSolution::closed_form(&a, central_point(m, k), k));
    }
    let a_hat = &a / norm;

    let mut rho = config.rho;
    let mut x = central_point(m, k);
    let mut y = x.clone();
    let mut w = x.clone();
    let mut u = DMatrix::<f64>::zeros(m, m);
    let mut v = DMatrix::<f64>::zeros(m, m);
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut next_rho_check = RHO_CHECK_START;

    while iterations < config.max_iter {
        iterations += 1;

        let target = ((&y - &u) + (&w - &v)) * 0.5 + &a_hat * (0.5 / rho);
        x = project_affine(&target, k);
        let y_prev = std::mem::replace(&mut y, project_psd(&(&x + &u))?);
        let w_prev = std::mem::replace(&mut w, project_nonnegative(&(&x + &v)));
        u += &x - &y;
        v += &x - &w;

        let r = (diff2(&x, &y) + diff2(&x, &w)).sqrt();
        let s = rho * (diff2(&y, &y_prev) + diff2(&w, &w_prev)).sqrt();
        let primal_scale = (2.0 * frob2(&x)).sqrt().max((frob2(&y) + frob2(&w)).sqrt()).max(1.0);
        let dual_scale = (rho * (frob2(&u) + frob2(&v)).sqrt()).max(1.0);
        primal = r / primal_scale;
        dual = s / dual_scale;

        if config.verbose && iterations % 100 == 0 {
            eprintln!(
                "iter={iterations} rho={rho:e} primal_residual={primal:e} dual_residual={dual:e} objective={}",
                a.dot(&x)
            );
        }
        if primal <= config.tol && dual <= config.tol {
            converged = true;
            break;
        }
        // Checkpoints double in spacing so rho settles; frequent changes stall ADMM.
        if config.adaptive_rho && iterations == next_rho_check {
            next_rho_check *= 2;
            if primal > 10.0 * dual {
                rho *= 2.0;
                u /= 2.0;
                v /= 2.0;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u *= 2.0;
                v *= 2.0;
            }
        }
    }

    let solution = SdpSolution {
        objective: a.dot(&x),
        z: MembershipMatrix { z: x, k },
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
    };
    if config.verbose {
        eprintln!("{}", solution.diagnostics());
    }
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn affinity_of_constant_data_is_zero() {
        let data = DataMatrix::from_rows(&vec![vec![1.5, -2.0]; 4]).unwrap();
        assert!(affinity(&data).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affinity_of_antipodal_pair() {
        let data = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, -2.0]]).unwrap();
        let a = affinity(&data);
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[5.0, -5.0, -5.0, 5.0]));
    }

    #[test]
    fn affinity_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let mean: Vec<f64> = (0..3).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / 5.0).collect();
        let a = affinity(&DataMatrix::from_rows(&rows).unwrap());
        for i in 0..5 {
            for j in 0..5 {
                let mut dot = 0.0;
                for t in 0..3 {
                    dot += (rows[i][t] - mean[t]) * (rows[j][t] - mean[t]);
                }
                assert!((a[(i, j)] - dot).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ideal_membership_two_pairs() {
        let l = Labeling::new(vec![0, 0, 1, 1], 2).unwrap();
        let z = ideal_membership(&l);
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5,
            ],
        );
        assert_eq!(z.matrix(), &expected);
        assert!(z.feasibility().passes(1e-14));
    }

    #[test]
    fn ideal_membership_is_feasible_for_uneven_labels() {
        let l = Labeling::new(vec![2, 0, 1, 2, 2, 0, 1], 3).unwrap();
        let z = ideal_membership(&l);
        let report = z.feasibility();
        assert!(report.passes(1e-14), "{report:?}");
        assert!((z.matrix().trace() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn feasibility_reports_trace_gap_and_negative_entries() {
        let id = DMatrix::<f64>::identity(5, 5);
        let report = check_feasibility(&id, 2).unwrap();
        assert_eq!(report.trace, 3.0);
        assert_eq!(report.row_sums, 0.0);

        let l = Labeling::new(vec![0, 0, 1, 1], 2).unwrap();
        let mut z = ideal_membership(&l).into_matrix();
        z[(0, 2)] = -0.01;
        let report = check_feasibility(&z, 2).unwrap();
        assert!((report.nonnegativity - 0.01).abs() < 1e-15);
    }

    #[test]
    fn feasibility_rejects_non_square() {
        assert!(matches!(
            check_feasibility(&DMatrix::zeros(2, 3), 1),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn affine_projection_lands_in_set() {
        for seed in 0..10 {
            let m = 3 + seed as usize;
            let k = 1 + seed as usize % 3;
            let z = project_affine(&random_matrix(m, seed), k);
            let report = check_feasibility(&z, k).unwrap();
            assert!(report.symmetry < 1e-12);
            assert!(report.row_sums < 1e-12, "{report:?}");
            assert!(report.trace < 1e-12, "{report:?}");
        }
    }

    #[test]
    fn affine_projection_is_orthogonal() {
        // The residual M - P(M) must be orthogonal to differences of points in the set.
        let m = random_matrix(6, 1);
        let p = project_affine(&m, 2);
        let q1 = project_affine(&random_matrix(6, 2), 2);
        let q2 = project_affine(&random_matrix(6, 3), 2);
        let inner = (&m - &p).dot(&(&q1 - &q2));
        assert!(inner.abs() < 1e-10, "{inner}");
        let sym = (&m + m.transpose()) * 0.5;
        assert!((&m - &p).dot(&(&q1 - &p)) - (&m - &sym).dot(&(&q1 - &p)) < 1e-10);
    }

    #[test]
    fn psd_projection_is_idempotent() {
        for seed in 0..5 {
            let once = project_psd(&random_matrix(8, seed)).unwrap();
            let twice = project_psd(&once).unwrap();
            assert!((&once - &twice).amax() < 1e-12);
            let report = check_feasibility(&once, 0).unwrap();
            assert!(report.min_eigenvalue < 1e-12);
        }
    }

    #[test]
    fn single_cluster_uses_closed_form() {
        let a = random_matrix(4, 9);
        let a = &a + a.transpose();
        let sol = solve_kmeans_sdp(&a, 1, &SolverConfig::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.z.feasibility().passes(1e-14));
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let a = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(
            solve_kmeans_sdp(&a, 4, &SolverConfig::default()),
            Err(Error::TooManyClusters { k: 4, n: 3 })
        ));
    }

    #[test]
    fn constant_objective_returns_feasible_point() {
        let data = DataMatrix::from_rows(&vec![vec![2.0, 1.0]; 6]).unwrap();
        let sol = solve_kmeans_sdp(&affinity(&data), 3, &SolverConfig::default()).unwrap();
        assert!(sol.z.feasibility().passes(1e-12));
        let ideal = ideal_membership(&Labeling::new(vec![0, 0, 1, 1, 2, 2], 3).unwrap());
        assert_eq!(sol.objective, affinity(&data).dot(ideal.matrix()));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SolverConfig {
            rho: 0.0,
            ..SolverConfig::default()
        };
        assert!(solve_kmeans_sdp(&DMatrix::identity(3, 3), 2, &cfg).is_err());
    }
}
