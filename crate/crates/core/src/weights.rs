//! Per-feature weight vectors for the weighted distance.
//!
//! Both constructions turn a per-feature score into a cost multiplier: a
//! feature that is strongly discriminative (high ANOVA F) or that nearby
//! desired-class records differ on a lot (high mean normalised change) gets a
//! *small* weight, which makes it cheap for the optimiser to move.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSpec};
use crate::distance::{distance_unchecked, WeightVector};
use crate::error::{Error, Result};

/// Default number of neighbours for [`knn_theta`].
pub const DEFAULT_K: usize = 20;

/// Maps a min-max normalised score in `[0, 1]` to a raw (pre-normalisation)
/// weight. Both variants are decreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaTransform {
    /// `1 / (s + smoothing)`
    Inverse { smoothing: f64 },
    /// `1 − s + smoothing`
    Complement { smoothing: f64 },
}

impl Default for ThetaTransform {
    fn default() -> Self {
        ThetaTransform::Inverse { smoothing: 0.1 }
    }
}

impl ThetaTransform {
    pub fn apply(&self, normalized: f64) -> f64 {
        match *self {
            ThetaTransform::Inverse { smoothing } => 1.0 / (normalized + smoothing),
            ThetaTransform::Complement { smoothing } => 1.0 - normalized + smoothing,
        }
    }

    fn validate(&self) -> Result<()> {
        let smoothing = match *self {
            ThetaTransform::Inverse { smoothing } | ThetaTransform::Complement { smoothing } => {
                smoothing
            }
        };
        if smoothing > 0.0 && smoothing.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "smoothing {smoothing} must be positive"
            )))
        }
    }
}

/// ANOVA F values and the weight vector derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceProfile {
    /// Raw F per feature; `+∞` is serialized as `null`.
    pub f_values: Vec<f64>,
    pub theta_global: WeightVector,
}

/// One-way ANOVA F statistic of feature `feature` grouped by target class.
///
/// Returns `+∞` when the classes have different means but no within-class
/// spread, and 0 for a constant column.
pub fn anova_f(data: &Dataset, feature: usize) -> Result<f64> {
    if feature >= data.n_features() {
        return Err(Error::DimensionMismatch {
            expected: data.n_features(),
            actual: feature + 1,
        });
    }
    let n = data.n_rows();
    if n < 3 {
        return Err(Error::InvalidDataset("ANOVA needs at least 3 rows".into()));
    }
    let mut sum = [0.0f64; 2];
    let mut count = [0usize; 2];
    for (row, &t) in data.records().iter().zip(data.targets()) {
        sum[t as usize] += row[feature];
        count[t as usize] += 1;
    }
    let grand = (sum[0] + sum[1]) / n as f64;
    let means = [sum[0] / count[0] as f64, sum[1] / count[1] as f64];
    let between: f64 = (0..2)
        .map(|g| count[g] as f64 * (means[g] - grand).powi(2))
        .sum();
    let within: f64 = data
        .records()
        .iter()
        .zip(data.targets())
        .map(|(row, &t)| (row[feature] - means[t as usize]).powi(2))
        .sum();
    // G = 2 groups: between has 1 degree of freedom, within has n − 2
    let ms_between = between;
    let ms_within = within / (n - 2) as f64;
    if ms_within == 0.0 {
        return Ok(if ms_between > 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok(ms_between / ms_within)
}

/// Min-max normalises `scores` over the mutable features and maps them through
/// `transform`. Infinite scores are replaced by the largest finite one first.
/// Equal scores give a uniform vector.
fn scores_to_theta(
    scores: &[f64],
    specs: &[FeatureSpec],
    transform: ThetaTransform,
) -> Result<WeightVector> {
    transform.validate()?;
    let mutable: Vec<usize> = (0..specs.len()).filter(|&j| specs[j].mutable).collect();
    if mutable.is_empty() {
        return Err(Error::InvalidWeights("no mutable features".into()));
    }
    let max_finite = mutable
        .iter()
        .map(|&j| scores[j])
        .filter(|s| s.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let capped: Vec<f64> = scores
        .iter()
        .map(|&s| if s.is_infinite() { max_finite } else { s })
        .collect();
    let lo = mutable
        .iter()
        .map(|&j| capped[j])
        .fold(f64::INFINITY, f64::min);
    let hi = mutable
        .iter()
        .map(|&j| capped[j])
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) || hi == lo {
        return WeightVector::uniform(specs);
    }
    let raw = (0..specs.len())
        .map(|j| {
            if specs[j].mutable {
                transform.apply((capped[j] - lo) / (hi - lo))
            } else {
                0.0
            }
        })
        .collect();
    WeightVector::new(raw, specs)
}

/// F values for every feature plus the global weight vector.
pub fn importance_profile(data: &Dataset, transform: ThetaTransform) -> Result<ImportanceProfile> {
    let f_values = (0..data.n_features())
        .map(|j| anova_f(data, j))
        .collect::<Result<Vec<_>>>()?;
    let theta_global = scores_to_theta(&f_values, data.specs(), transform)?;
    Ok(ImportanceProfile {
        f_values,
        theta_global,
    })
}

/// Global-importance weights with the default `1 / (F̃ + 0.1)` transform.
pub fn global_theta(data: &Dataset) -> Result<WeightVector> {
    Ok(importance_profile(data, ThetaTransform::default())?.theta_global)
}

/// Row indices of the `k` records of `desired_class` closest to `x` under the
/// MAD distance. Ties go to the lower row index.
pub fn nearest_of_class(
    data: &Dataset,
    x: &[f64],
    desired_class: u8,
    k: usize,
) -> Result<Vec<usize>> {
    data.check_instance(x)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut candidates: Vec<(f64, usize)> = data
        .targets()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == desired_class)
        .map(|(i, _)| (distance_unchecked(x, data.row(i), data.specs(), None), i))
        .collect();
    if candidates.len() < k {
        return Err(Error::NotEnoughNeighbors {
            class: desired_class,
            needed: k,
            available: candidates.len(),
        });
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(candidates.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Mean MAD-normalised absolute change from `x` to each neighbour, per
/// feature (0 on immutable features).
pub fn neighbor_changes(data: &Dataset, x: &[f64], neighbors: &[usize]) -> Vec<f64> {
    let k = neighbors.len() as f64;
    data.specs()
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            if !spec.mutable {
                return 0.0;
            }
            neighbors
                .iter()
                .map(|&i| (x[j] - data.row(i)[j]).abs() / spec.mad)
                .sum::<f64>()
                / k
        })
        .collect()
}

/// Local weights from the `k` nearest desired-class records, default transform.
pub fn knn_theta(data: &Dataset, x: &[f64], desired_class: u8, k: usize) -> Result<WeightVector> {
    knn_theta_with(data, x, desired_class, k, ThetaTransform::default())
}

pub fn knn_theta_with(
    data: &Dataset,
    x: &[f64],
    desired_class: u8,
    k: usize,
    transform: ThetaTransform,
) -> Result<WeightVector> {
    let neighbors = nearest_of_class(data, x, desired_class, k)?;
    let changes = neighbor_changes(data, x, &neighbors);
    scores_to_theta(&changes, data.specs(), transform)
}
