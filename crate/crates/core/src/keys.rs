//! Content-derived random keys for data points.
//!
//! Every random choice that selects points (sketch membership, block
//! partitions, down-sampling) is driven by a key computed from the point's
//! coordinates and a seed rather than from its row position. Reordering the
//! rows of a data matrix therefore reorders the keys with it, which makes
//! the sketch methods exactly invariant to row order.

use std::collections::HashMap;

use crate::dataset::DataMatrix;

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives an independent seed for a numbered substream.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Maps a 64-bit key to a uniform draw in [0, 1).
pub(crate) fn unit_interval(key: u64) -> f64 {
    (key >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One key per row. Exact duplicate rows are told apart by their
/// occurrence count, so duplicates receive distinct keys.
pub(crate) fn point_keys(data: &DataMatrix, seed: u64) -> Vec<u64> {
    let mut seen: HashMap<Vec<u64>, u64> = HashMap::new();
    (0..data.n())
        .map(|i| {
            let bits: Vec<u64> = data.row(i).iter().map(|v| canonical_bits(*v)).collect();
            let mut h = mix64(seed);
            for b in &bits {
                h = mix64(h ^ *b);
            }
            let occurrence = seen.entry(bits).or_insert(0);
            h = mix64(h ^ *occurrence);
            *occurrence += 1;
            h
        })
        .collect()
}

/// Row indices sorted by key (ties broken by position).
pub(crate) fn canonical_order(keys: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&i| (keys[i], i));
    order
}

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 compare equal and must hash equal
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_follow_rows_under_permutation() {
        let data = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let permuted = data.select(&[2, 0, 1]);
        let a = point_keys(&data, 9);
        let b = point_keys(&permuted, 9);
        assert_eq!(b, vec![a[2], a[0], a[1]]);
    }

    #[test]
    fn duplicates_get_distinct_keys() {
        let data = DataMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let keys = point_keys(&data, 3);
        assert_ne!(keys[0], keys[1]);
        assert_ne!(keys[1], keys[2]);
    }

    #[test]
    fn unit_interval_is_half_open() {
        assert_eq!(unit_interval(0), 0.0);
        assert!(unit_interval(u64::MAX) < 1.0);
    }
}
