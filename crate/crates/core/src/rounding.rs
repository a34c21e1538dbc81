//! Spectral rounding of an SDP solution into a partition.

use nalgebra::DMatrix;

use crate::dataset::{DataMatrix, Labeling};
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::sdp::eigen;

/// Seeded K-means++ restarts run on the eigenvector embedding.
pub const ROUNDING_RESTARTS: usize = 10;
const ROUNDING_MAX_ITER: usize = 300;

/// Rows of the top-`k` eigenvectors of `(Z + Zᵀ)/2`, as an `m x k` matrix.
///
/// Eigenvalues are ordered descending; equal eigenvalues keep the solver's
/// order. Rows are not normalized.
pub fn spectral_embedding(z: &DMatrix<f64>, k: usize) -> Result<DataMatrix> {
    if !z.is_square() {
        return Err(Error::NotSquare {
            rows: z.nrows(),
            cols: z.ncols(),
        });
    }
    let m = z.nrows();
    if k == 0 || k > m {
        return Err(Error::TooManyClusters { k, n: m });
    }
    let eig = eigen((z + z.transpose()) * 0.5)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut values = Vec::with_capacity(m * k);
    for i in 0..m {
        for &col in &order[..k] {
            values.push(eig.eigenvectors[(i, col)]);
        }
    }
    DataMatrix::new(m, k, values)
}

/// Top-`k` eigenvectors of the symmetrized `z`, then K-means on the rows
/// (K-means++ with [`ROUNDING_RESTARTS`] seeded restarts, best objective).
/// Every one of the `k` clusters is non-empty in the result.
pub fn spectral_round(z: &DMatrix<f64>, k: usize, seed: u64) -> Result<Labeling> {
    let embedding = spectral_embedding(z, k)?;
    let config = KMeansConfig {
        restarts: ROUNDING_RESTARTS,
        max_iter: ROUNDING_MAX_ITER,
    };
    Ok(kmeans(&embedding, k, &config, seed)?.labeling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::ideal_membership;

    #[test]
    fn ideal_membership_rounds_to_its_partition() {
        let truth = Labeling::new(vec![0, 1, 2, 0, 1, 2, 2, 0], 3).unwrap();
        let z = ideal_membership(&truth);
        for seed in 0..5 {
            let l = spectral_round(z.matrix(), 3, seed).unwrap();
            assert!(l.same_partition(&truth));
        }
    }

    #[test]
    fn rounding_is_deterministic() {
        let truth = Labeling::new(vec![0, 0, 1, 1, 1], 2).unwrap();
        let z = ideal_membership(&truth);
        let a = spectral_round(z.matrix(), 2, 42).unwrap();
        let b = spectral_round(z.matrix(), 2, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(spectral_round(&DMatrix::zeros(2, 3), 1, 0).is_err());
        assert!(spectral_round(&DMatrix::identity(2, 2), 3, 0).is_err());
    }
}
