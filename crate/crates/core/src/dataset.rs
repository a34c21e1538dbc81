//! Data containers, Gaussian-mixture generation and CSV I/O.
//!
//! Random numbers come from ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded with
//! a 64-bit seed and split into independent substreams with
//! `set_stream`. Gaussian noise uses the Ziggurat method of
//! `rand_distr::StandardNormal`, so a given (seed, stream) pair always
//! produces the same matrix on every platform.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` points in `R^p`, stored row-major (row `i` is observation `X_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput(format!(
                "data matrix must be non-empty, got {n}x{p}"
            )));
        }
        if values.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                pos / p,
                pos % p
            )));
        }
        Ok(Self { n, p, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), p, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> DataMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DataMatrix {
            n: indices.len(),
            p: self.p,
            values,
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.p];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        mean
    }

    /// Adds `shift` to every row.
    pub fn translated(&self, shift: &[f64]) -> Result<DataMatrix> {
        if shift.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: shift.len(),
            });
        }
        let values = self
            .values
            .chunks_exact(self.p)
            .flat_map(|row| row.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        DataMatrix::new(self.n, self.p, values)
    }
}

/// Cluster assignment for each of `n` points.
///
/// Ids are zero-based in memory (`0..k`); the CSV format uses `1..=k`.
/// Clusters may be empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    assignments: Vec<usize>,
    k: usize,
}

impl Labeling {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("cluster count must be >= 1".into()));
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for k = {k}"
            )));
        }
        Ok(Self { assignments, k })
    }

    /// Contiguous labeling: the first `sizes[0]` points in cluster 0, etc.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let assignments = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        Self::new(assignments, sizes.len())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn label(&self, i: usize) -> usize {
        self.assignments[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Point indices of each cluster, in increasing order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (i, &a) in self.assignments.iter().enumerate() {
            groups[a].push(i);
        }
        groups
    }

    pub fn nonempty_clusters(&self) -> usize {
        self.sizes().iter().filter(|&&s| s > 0).count()
    }

    /// Labeling of the rows `indices` (same order as `DataMatrix::select`).
    pub fn select(&self, indices: &[usize]) -> Labeling {
        Labeling {
            assignments: indices.iter().map(|&i| self.assignments[i]).collect(),
            k: self.k,
        }
    }

    /// Renames cluster `c` to `mapping[c]`.
    pub fn relabeled(&self, mapping: &[usize]) -> Result<Labeling> {
        if mapping.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                actual: mapping.len(),
            });
        }
        Labeling::new(
            self.assignments.iter().map(|&a| mapping[a]).collect(),
            self.k,
        )
    }

    /// True when both labelings induce the same partition.
    pub fn same_partition(&self, other: &Labeling) -> bool {
        if self.n() != other.n() {
            return false;
        }
        let mut forward = vec![None; self.k];
        let mut backward = vec![None; other.k];
        for (&a, &b) in self.assignments.iter().zip(&other.assignments) {
            match (forward[a], backward[b]) {
                (None, None) => {
                    forward[a] = Some(b);
                    backward[b] = Some(a);
                }
                (Some(fb), Some(ba)) if fb == b && ba == a => {}
                _ => return false,
            }
        }
        true
    }
}

/// How the cluster centers of a mixture are placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterLayout {
    /// `mu_l = delta / sqrt(2) * e_l`: all pairwise distances equal `delta`.
    RegularSimplex,
    /// One row per cluster.
    Explicit(Vec<Vec<f64>>),
}

/// Parameters of an isotropic Gaussian mixture with contiguous clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub sizes: Vec<usize>,
    pub p: usize,
    pub sigma: f64,
    /// Center separation (distance, not squared). Ignored for explicit layouts.
    pub delta: f64,
    pub layout: CenterLayout,
    pub seed: u64,
    /// ChaCha stream id; replicates of one experiment use distinct streams.
    #[serde(default)]
    pub stream: u64,
}

impl GmmSpec {
    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::InvalidInput(
                "sizes: every cluster needs at least one point".into(),
            ));
        }
        if self.p == 0 {
            return Err(Error::InvalidInput("p: dimension must be >= 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sigma: must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "delta: must be finite and >= 0, got {}",
                self.delta
            )));
        }
        match &self.layout {
            CenterLayout::RegularSimplex if self.p < self.k() => Err(Error::DimensionTooSmall {
                required: self.k(),
                p: self.p,
            }),
            CenterLayout::Explicit(centers) => {
                if centers.len() != self.k() {
                    return Err(Error::DimensionMismatch {
                        expected: self.k(),
                        actual: centers.len(),
                    });
                }
                for c in centers {
                    if c.len() != self.p {
                        return Err(Error::DimensionMismatch {
                            expected: self.p,
                            actual: c.len(),
                        });
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn centers(&self) -> Result<DataMatrix> {
        self.validate()?;
        match &self.layout {
            CenterLayout::RegularSimplex => simplex_centers(self.k(), self.p, self.delta),
            CenterLayout::Explicit(rows) => DataMatrix::from_rows(rows),
        }
    }
}

/// ChaCha8 generator for substream `stream` of `seed`.
pub fn substream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Centers on the vertices of a regular simplex: row `l` is `delta/sqrt(2) * e_l`.
pub fn simplex_centers(k: usize, p: usize, delta: f64) -> Result<DataMatrix> {
    if k == 0 {
        return Err(Error::InvalidInput("cluster count must be >= 1".into()));
    }
    if p < k {
        return Err(Error::DimensionTooSmall { required: k, p });
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "delta must be finite and >= 0, got {delta}"
        )));
    }
    let scale = delta / std::f64::consts::SQRT_2;
    let mut values = vec![0.0; k * p];
    for l in 0..k {
        values[l * p + l] = scale;
    }
    DataMatrix::new(k, p, values)
}

/// Draws the mixture: the first `sizes[0]` rows from cluster 0, and so on.
pub fn generate_gmm(spec: &GmmSpec) -> Result<(DataMatrix, Labeling)> {
    let centers = spec.centers()?;
    let n = spec.n();
    let p = spec.p;
    let mut rng = substream_rng(spec.seed, spec.stream);
    let mut values = Vec::with_capacity(n * p);
    for (k, &size) in spec.sizes.iter().enumerate() {
        let center = centers.row(k);
        for _ in 0..size {
            if spec.sigma == 0.0 {
                values.extend_from_slice(center);
            } else {
                values.extend(center.iter().map(|&c| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + spec.sigma * z
                }));
            }
        }
    }
    Ok((DataMatrix::new(n, p, values)?, Labeling::from_sizes(&spec.sizes)?))
}

/// Reads a comma-separated numeric file.
///
/// The first line is treated as a header when any of its fields is not a
/// number. A header column named `label` holds integer cluster ids `1..=K`;
/// `K` is the largest id present. Row and column numbers in errors are
/// one-based and count the header line.
pub fn load_csv(path: impl AsRef<Path>) -> Result<(DataMatrix, Option<Labeling>)> {
    let file = File::open(path)?;
    parse_csv(BufReader::new(file))
}

pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<(DataMatrix, Option<Labeling>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records().enumerate().peekable();
    let mut label_col = None;
    let mut width = None;
    let mut first_data_row = 1;

    if let Some((_, Ok(first))) = records.peek() {
        if first.iter().any(|f| f.parse::<f64>().is_err()) {
            label_col = first.iter().position(|f| f == "label");
            width = Some(first.len());
            records.next();
            first_data_row = 2;
        }
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (idx, record) in records {
        let row = idx + 1;
        let record = record?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                row,
                column: record.len().min(expected) + 1,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_col {
                let id: usize = field.parse().map_err(|_| Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("label {field:?} is not a positive integer"),
                })?;
                if id == 0 {
                    return Err(Error::Parse {
                        row,
                        column: j + 1,
                        message: "labels start at 1".into(),
                    });
                }
                labels.push(id - 1);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("{field:?} is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: j + 1,
                        message: format!("{field:?} is not finite"),
                    });
                }
                values.push(v);
            }
        }
        n += 1;
    }

    let width = width.unwrap_or(0);
    let p = width - usize::from(label_col.is_some()).min(width);
    if n == 0 || p == 0 {
        return Err(Error::Parse {
            row: first_data_row,
            column: 1,
            message: "no numeric data".into(),
        });
    }
    let data = DataMatrix::new(n, p, values)?;
    let labeling = match label_col {
        Some(_) => {
            let k = labels.iter().max().map_or(1, |m| m + 1);
            Some(Labeling::new(labels, k)?)
        }
        None => None,
    };
    Ok((data, labeling))
}

/// Writes `x1..xp[,label]` with a header. Values use Rust's shortest
/// round-trip formatting, so `load_csv` recovers them bit for bit.
pub fn save_csv(
    data: &DataMatrix,
    labeling: Option<&Labeling>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(data, labeling, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(data: &DataMatrix, labeling: Option<&Labeling>, out: &mut W) -> Result<()> {
    if let Some(l) = labeling {
        if l.n() != data.n() {
            return Err(Error::DimensionMismatch {
                expected: data.n(),
                actual: l.n(),
            });
        }
    }
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    if labeling.is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, row) in data.rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(l) = labeling {
            fields.push((l.label(i) + 1).to_string());
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_rows_are_scaled_basis_vectors() {
        let c = simplex_centers(3, 3, std::f64::consts::SQRT_2).unwrap();
        for l in 0..3 {
            for j in 0..3 {
                let expected = if l == j { 1.0 } else { 0.0 };
                assert!((c.row(l)[j] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn simplex_zero_separation() {
        let c = simplex_centers(2, 2, 0.0).unwrap();
        assert!(c.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simplex_pairwise_distances() {
        let delta = 7.3_f64;
        let c = simplex_centers(4, 1000, delta).unwrap();
        for a in 0..4 {
            for b in (a + 1)..4 {
                let d2: f64 = c.row(a).iter().zip(c.row(b)).map(|(x, y)| (x - y).powi(2)).sum();
                assert!((d2 - delta * delta).abs() <= 1e-12 * delta * delta);
            }
        }
    }

    #[test]
    fn simplex_needs_enough_dimensions() {
        assert!(matches!(
            simplex_centers(4, 3, 1.0),
            Err(Error::DimensionTooSmall { required: 4, p: 3 })
        ));
    }

    fn spec(sigma: f64) -> GmmSpec {
        GmmSpec {
            sizes: vec![3, 4],
            p: 3,
            sigma,
            delta: 2.0,
            layout: CenterLayout::RegularSimplex,
            seed: 11,
            stream: 0,
        }
    }

    #[test]
    fn noiseless_points_sit_on_centers() {
        let s = spec(0.0);
        let (data, labels) = generate_gmm(&s).unwrap();
        let centers = s.centers().unwrap();
        for i in 0..data.n() {
            assert_eq!(data.row(i), centers.row(labels.label(i)));
        }
        assert_eq!(labels.sizes(), vec![3, 4]);
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, _) = generate_gmm(&spec(1.0)).unwrap();
        let (b, _) = generate_gmm(&spec(1.0)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let mut other = spec(1.0);
        other.stream = 1;
        let (c, _) = generate_gmm(&other).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn invalid_spec_names_field() {
        let mut s = spec(1.0);
        s.sizes = vec![3, 0];
        let err = generate_gmm(&s).unwrap_err().to_string();
        assert!(err.contains("sizes"), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let data = DataMatrix::from_rows(&[
            vec![0.1, -2.5e-17],
            vec![std::f64::consts::PI, 1e300],
            vec![-0.0, 123456789.123456789],
        ])
        .unwrap();
        let labels = Labeling::new(vec![0, 1, 1], 2).unwrap();
        let mut buf = Vec::new();
        write_csv(&data, Some(&labels), &mut buf).unwrap();
        let (back, back_labels) = parse_csv(buf.as_slice()).unwrap();
        assert_eq!(back.as_slice(), data.as_slice());
        assert_eq!(back_labels.unwrap(), labels);
    }

    #[test]
    fn csv_without_header() {
        let (data, labels) = parse_csv("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!((data.n(), data.p()), (2, 2));
        assert!(labels.is_none());
    }

    #[test]
    fn csv_reports_bad_cell_location() {
        let err = parse_csv("x1,x2\n1,2\n3,abc\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let err = parse_csv("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err:?}");
    }

    #[test]
    fn csv_rejects_empty_input() {
        assert!(matches!(parse_csv("".as_bytes()), Err(Error::Parse { .. })));
        assert!(matches!(parse_csv("x1,label\n".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn same_partition_ignores_names() {
        let a = Labeling::new(vec![0, 0, 1, 2], 3).unwrap();
        let b = Labeling::new(vec![2, 2, 0, 1], 3).unwrap();
        let c = Labeling::new(vec![2, 0, 0, 1], 3).unwrap();
        assert!(a.same_partition(&b));
        assert!(!a.same_partition(&c));
    }
}
