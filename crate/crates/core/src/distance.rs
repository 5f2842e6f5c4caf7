//! MAD-normalised Manhattan distance and its per-feature weighted variant.
//!
//! Immutable features are skipped: a counterfactual never changes them, and
//! their MAD may be zero.

use serde::{Deserialize, Serialize};

use crate::data::FeatureSpec;
use crate::error::{Error, Result};

/// Nonnegative per-feature weights, zero on immutable features and with mean 1
/// over the mutable ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates `raw`, zeroes immutable entries and rescales the rest to mean 1.
    pub fn new(raw: Vec<f64>, specs: &[FeatureSpec]) -> Result<Self> {
        if raw.len() != specs.len() {
            return Err(Error::DimensionMismatch {
                expected: specs.len(),
                actual: raw.len(),
            });
        }
        if let Some(v) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "entry {v} is negative or non-finite"
            )));
        }
        let mutable: Vec<bool> = specs.iter().map(|s| s.mutable).collect();
        let count = mutable.iter().filter(|m| **m).count();
        if count == 0 {
            return Err(Error::InvalidWeights("no mutable features".into()));
        }
        let total: f64 = raw
            .iter()
            .zip(&mutable)
            .filter(|(_, m)| **m)
            .map(|(v, _)| v)
            .sum();
        if total <= 0.0 {
            return Err(Error::InvalidWeights("all mutable weights are zero".into()));
        }
        let mean = total / count as f64;
        let theta = raw
            .iter()
            .zip(&mutable)
            .map(|(v, m)| if *m { v / mean } else { 0.0 })
            .collect();
        Ok(Self(theta))
    }

    /// All-ones on mutable features.
    pub fn uniform(specs: &[FeatureSpec]) -> Result<Self> {
        Self::new(vec![1.0; specs.len()], specs)
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
}

fn check_pair(x: &[f64], x_prime: &[f64], specs: &[FeatureSpec]) -> Result<()> {
    for v in [x, x_prime] {
        if v.len() != specs.len() {
            return Err(Error::DimensionMismatch {
                expected: specs.len(),
                actual: v.len(),
            });
        }
        if v.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("distance input".into()));
        }
    }
    Ok(())
}

/// Inner loop shared by both metrics. `theta = None` multiplies nothing, so the
/// unweighted sum is exactly what an all-ones vector produces.
#[inline]
pub(crate) fn distance_unchecked(
    x: &[f64],
    x_prime: &[f64],
    specs: &[FeatureSpec],
    theta: Option<&[f64]>,
) -> f64 {
    let mut sum = 0.0;
    for j in 0..specs.len() {
        if !specs[j].mutable {
            continue;
        }
        let term = (x[j] - x_prime[j]).abs() / specs[j].mad;
        sum += match theta {
            Some(t) => term * t[j],
            None => term,
        };
    }
    sum
}

/// `Σ |x_j − x'_j| / MAD_j` over mutable features.
pub fn mad_distance(x: &[f64], x_prime: &[f64], specs: &[FeatureSpec]) -> Result<f64> {
    check_pair(x, x_prime, specs)?;
    Ok(distance_unchecked(x, x_prime, specs, None))
}

/// `Σ θ_j |x_j − x'_j| / MAD_j` over mutable features.
pub fn weighted_distance(
    x: &[f64],
    x_prime: &[f64],
    specs: &[FeatureSpec],
    theta: &WeightVector,
) -> Result<f64> {
    check_pair(x, x_prime, specs)?;
    if theta.len() != specs.len() {
        return Err(Error::DimensionMismatch {
            expected: specs.len(),
            actual: theta.len(),
        });
    }
    Ok(distance_unchecked(
        x,
        x_prime,
        specs,
        Some(theta.as_slice()),
    ))
}
