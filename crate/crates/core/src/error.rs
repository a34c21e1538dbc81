use thiserror::Error;

/// Errors produced by the clustering library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dimension too small: need p >= {required}, got p = {p}")]
    DimensionTooSmall { required: usize, p: usize },

    #[error("requested {k} clusters from only {n} points")]
    TooManyClusters { k: usize, n: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("csv parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("sketch too small: {sketch_size} sampled points, {nonempty} non-empty clusters, {k} required")]
    SketchTooSmall {
        sketch_size: usize,
        nonempty: usize,
        k: usize,
    },

    #[error("cluster {cluster} of the pilot partition is empty")]
    EmptyCluster { cluster: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("all {epochs} epochs failed")]
    AllEpochsFailed { epochs: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
