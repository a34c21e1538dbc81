//! Exact-recovery separation thresholds and sampling-weight diagnostics.
//!
//! All logarithms are natural logarithms.

use crate::dataset::Labeling;
use crate::error::{Error, Result};
use crate::sketch::{size_adaptive_weights, WeightVector};

/// Cluster sizes and model parameters feeding the threshold formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdInputs {
    pub sizes: Vec<usize>,
    pub p: usize,
    pub sigma: f64,
    pub gamma: Option<f64>,
}

impl ThresholdInputs {
    pub fn new(sizes: Vec<usize>, p: usize, sigma: f64) -> Self {
        Self {
            sizes,
            p,
            sigma,
            gamma: None,
        }
    }

    pub fn equal(n: usize, k: usize, p: usize, sigma: f64) -> Self {
        Self::new(vec![n / k; k], p, sigma)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Smallest pairwise harmonic mean `2 n_k n_l / (n_k + n_l)` over `k != l`.
    /// With a single cluster this is `n_1`.
    pub fn n_star(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (a, &na) in self.sizes.iter().enumerate() {
            for &nb in &self.sizes[a + 1..] {
                let (na, nb) = (na as f64, nb as f64);
                best = best.min(2.0 * na * nb / (na + nb));
            }
        }
        if best.is_finite() {
            best
        } else {
            self.sizes.first().copied().unwrap_or(0) as f64
        }
    }

    pub fn n_min(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::InvalidInput("cluster sizes must all be >= 1".into()));
        }
        if let Some(g) = self.gamma {
            check_gamma(g)?;
        }
        check_common(self.n(), self.sigma)
    }
}

fn check_common(n: usize, sigma: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "thresholds need n >= 2 (log n > 0), got n = {n}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    Ok(())
}

/// `4 σ² (1 + sqrt(1 + ratio)) log n`, the shared shape of every cutoff.
fn cutoff(n: usize, sigma: f64, ratio: f64) -> f64 {
    let log_n = (n as f64).ln();
    4.0 * sigma * sigma * (1.0 + (1.0 + ratio).sqrt()) * log_n
}

/// Full-data cutoff `4σ²(1 + sqrt(1 + p/(n* log n))) log n`.
pub fn threshold_full(inputs: &ThresholdInputs) -> Result<f64> {
    inputs.validate()?;
    let n = inputs.n();
    let ratio = inputs.p as f64 / (inputs.n_star() * (n as f64).ln());
    Ok(cutoff(n, inputs.sigma, ratio))
}

/// SL cutoff `4σ²(1 + sqrt(1 + Kp/(γ n log n))) log n`.
pub fn threshold_sl(n: usize, k: usize, p: usize, sigma: f64, gamma: f64) -> Result<f64> {
    check_common(n, sigma)?;
    check_gamma(gamma)?;
    if k == 0 {
        return Err(Error::InvalidInput("cluster count must be >= 1".into()));
    }
    let nf = n as f64;
    let ratio = (k * p) as f64 / (gamma * nf * nf.ln());
    Ok(cutoff(n, sigma, ratio))
}

/// BCSL cutoff `4σ²(1 + sqrt(1 + p/(γ n_min log n))) log n`.
pub fn threshold_bcsl(n: usize, n_min: usize, p: usize, sigma: f64, gamma: f64) -> Result<f64> {
    check_common(n, sigma)?;
    check_gamma(gamma)?;
    if n_min == 0 || n_min > n {
        return Err(Error::InvalidInput(format!(
            "n_min must lie in 1..={n}, got {n_min}"
        )));
    }
    let nf = n as f64;
    let ratio = p as f64 / (gamma * n_min as f64 * nf.ln());
    Ok(cutoff(n, sigma, ratio))
}

/// Squared separation `Δ² = λ*² · Δ̄*²`.
pub fn separation_from_lambda(lambda_star: f64, inputs: &ThresholdInputs) -> Result<f64> {
    if !(lambda_star >= 0.0 && lambda_star.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda_star must be >= 0, got {lambda_star}"
        )));
    }
    Ok(lambda_star * lambda_star * threshold_full(inputs)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealWeights {
    pub weights: WeightVector,
    /// Some `γn/(K n_k)` exceeded one and was clipped.
    pub clipped: bool,
}

/// `w*_i = γ n / (K n_k)` for the true partition, clipped to `[0, 1]`.
pub fn ideal_weights(labeling: &Labeling, gamma: f64) -> Result<IdealWeights> {
    let (weights, clipped) = size_adaptive_weights(labeling, gamma)?;
    Ok(IdealWeights { weights, clipped })
}

fn check_pair(weights: &WeightVector, ideal: &WeightVector) -> Result<()> {
    if weights.len() != ideal.len() {
        return Err(Error::DimensionMismatch {
            expected: ideal.len(),
            actual: weights.len(),
        });
    }
    if ideal.as_slice().iter().any(|&w| w <= 0.0) {
        return Err(Error::InvalidInput("ideal weights must be positive".into()));
    }
    Ok(())
}

/// Smallest `δ` for which `weights` are `(ε, δ)`-weights: the fraction of
/// points with `|w_i / w*_i - 1| > ε`.
pub fn epsilon_delta_fraction(weights: &WeightVector, ideal: &WeightVector, epsilon: f64) -> Result<f64> {
    check_pair(weights, ideal)?;
    if weights.is_empty() {
        return Ok(0.0);
    }
    let bad = weights
        .as_slice()
        .iter()
        .zip(ideal.as_slice())
        .filter(|(w, s)| (*w / *s - 1.0).abs() > epsilon)
        .count();
    Ok(bad as f64 / weights.len() as f64)
}

/// Mean relative deviation `(1/n) Σ |w_i - w*_i| / w*_i`.
pub fn mean_relative_weight_difference(weights: &WeightVector, ideal: &WeightVector) -> Result<f64> {
    check_pair(weights, ideal)?;
    if weights.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = weights
        .as_slice()
        .iter()
        .zip(ideal.as_slice())
        .map(|(w, s)| (w - s).abs() / s)
        .sum();
    Ok(total / weights.len() as f64)
}
