//! SDP-relaxed K-means clustering (Peng–Wei relaxation) and the
//! sketch-and-lift family of linear-time approximations.
//!
//! The pipeline for every sketch method is the same: draw a subsample,
//! solve the K-means SDP on it with a first-order splitting solver, round
//! the solution spectrally, estimate centroids from the rounded partition
//! and assign every remaining point to its nearest centroid.
//!
//! Modules:
//! - [`dataset`]: Gaussian-mixture generation and CSV I/O.
//! - [`sdp`]: affinity matrices, membership matrices and the ADMM solver.
//! - [`rounding`]: spectral rounding of SDP solutions.
//! - [`kmeans`]: K-means++ seeding, Lloyd iterations, nearest-centroid lift.
//! - [`sketch`]: SL, BCSL, WSL, ME-SL and MR-WSL.
//! - [`theory`]: exact-recovery thresholds and sampling-weight diagnostics.
//! - [`eval`]: misclassification error, replicate runs and aggregation.

pub mod assignment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kmeans;
pub mod rounding;
pub mod sdp;
pub mod sketch;
pub mod theory;

mod keys;

pub use dataset::{DataMatrix, GmmSpec, Labeling};
pub use error::{Error, Result};
pub use kmeans::Centroids;
pub use sdp::{MembershipMatrix, SdpSolution, SolverConfig};
pub use sketch::{SketchConfig, SketchMode, WeightVector};
