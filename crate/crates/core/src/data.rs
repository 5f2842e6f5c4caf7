//! Tabular datasets: CSV ingestion, preprocessing, synthetic generation and
//! per-feature statistics (bounds, MAD, mutability).
//!
//! A [`Dataset`] is immutable once built. Every constructor routes through the
//! same validation so the invariants below always hold:
//!
//! * every row has exactly `p` finite values,
//! * targets are 0/1 with both classes present,
//! * `specs[j].mad` is the MAD of column `j` (or its fallback, flagged by
//!   `mad_fallback_used`), and constant columns are immutable.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scale factor turning a mean absolute deviation into a MAD-comparable
/// estimate for normally distributed data.
pub const MAD_FALLBACK_SCALE: f64 = 1.4826;

/// Default absolute Pearson correlation at which the later of two columns is
/// dropped by [`preprocess`].
pub const DEFAULT_CORR_THRESHOLD: f64 = 0.95;

const MAX_DECIMALS: u32 = 4;

/// How a feature is named and printed in explanations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDisplay {
    /// Phrase used the first time the feature is mentioned.
    pub label: Option<String>,
    /// Phrase used on later mentions; falls back to `label`.
    pub short_label: Option<String>,
    /// Printed before values, e.g. `$`.
    pub prefix: String,
    /// Number of decimals printed, inferred from the training data.
    pub decimals: u32,
}

/// Per-feature metadata: bounds, mutability and robust scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub mutable: bool,
    pub mad: f64,
    pub mad_fallback_used: bool,
    pub display: FeatureDisplay,
}

impl FeatureSpec {
    /// Smallest absolute change that counts as "changing" this feature.
    pub fn change_threshold(&self) -> f64 {
        (1e-3 * self.mad).max(1e-9)
    }

    pub fn first_label(&self) -> &str {
        self.display.label.as_deref().unwrap_or(&self.name)
    }

    pub fn later_label(&self) -> &str {
        self.display
            .short_label
            .as_deref()
            .unwrap_or_else(|| self.first_label())
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower && value <= self.upper
    }
}

/// User overrides for one feature, as read from the metadata file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureOverride {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub mutable: Option<bool>,
    pub label: Option<String>,
    pub short_label: Option<String>,
    pub prefix: Option<String>,
    pub decimals: Option<u32>,
}

/// Feature-metadata document: feature name → overrides.
pub type FeatureMetadata = BTreeMap<String, FeatureOverride>;

pub fn load_metadata(path: impl AsRef<Path>) -> Result<FeatureMetadata> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Feature matrix, binary targets and feature metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Vec<f64>>,
    targets: Vec<u8>,
    specs: Vec<FeatureSpec>,
}

impl Dataset {
    /// Builds a dataset with inferred bounds, all features mutable (unless
    /// constant) and per-column MAD.
    pub fn new(records: Vec<Vec<f64>>, targets: Vec<u8>, names: Vec<String>) -> Result<Self> {
        let p = names.len();
        validate_shape(&records, &targets, p)?;
        let specs = names
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let column: Vec<f64> = records.iter().map(|r| r[j]).collect();
                let (lower, upper) = min_max(&column);
                FeatureSpec {
                    name,
                    lower,
                    upper,
                    mutable: true,
                    mad: 0.0,
                    mad_fallback_used: false,
                    display: FeatureDisplay {
                        label: None,
                        short_label: None,
                        prefix: String::new(),
                        decimals: infer_decimals(&column),
                    },
                }
            })
            .collect();
        Self::from_parts(records, targets, specs)
    }

    /// Rebuilds statistics for `records` while keeping the bounds, mutability
    /// and display settings of `base_specs`.
    fn from_parts(
        records: Vec<Vec<f64>>,
        targets: Vec<u8>,
        base_specs: Vec<FeatureSpec>,
    ) -> Result<Self> {
        let p = base_specs.len();
        validate_shape(&records, &targets, p)?;
        let mut specs = base_specs;
        for (j, spec) in specs.iter_mut().enumerate() {
            let column: Vec<f64> = records.iter().map(|r| r[j]).collect();
            if !(spec.lower.is_finite() && spec.upper.is_finite() && spec.lower <= spec.upper) {
                return Err(Error::InvalidDataset(format!(
                    "feature {:?} has invalid bounds [{}, {}]",
                    spec.name, spec.lower, spec.upper
                )));
            }
            if let Some(v) = column.iter().find(|v| !spec.contains(**v)) {
                return Err(Error::InvalidDataset(format!(
                    "feature {:?} value {v} lies outside bounds [{}, {}]",
                    spec.name, spec.lower, spec.upper
                )));
            }
            let (mad, fallback) = robust_scale(&column);
            spec.mad = mad;
            spec.mad_fallback_used = fallback;
            if mad == 0.0 || spec.lower == spec.upper {
                spec.mutable = false;
            }
        }
        Ok(Self {
            records,
            targets,
            specs,
        })
    }

    /// Applies user overrides. Unlisted features keep their inferred values.
    pub fn with_metadata(self, metadata: &FeatureMetadata) -> Result<Self> {
        let mut specs = self.specs;
        for (name, ov) in metadata {
            let spec = specs.iter_mut().find(|s| &s.name == name).ok_or_else(|| {
                Error::InvalidDataset(format!("metadata names unknown feature {name:?}"))
            })?;
            if let Some(lower) = ov.lower {
                spec.lower = lower;
            }
            if let Some(upper) = ov.upper {
                spec.upper = upper;
            }
            if let Some(mutable) = ov.mutable {
                spec.mutable = mutable;
            }
            if ov.label.is_some() {
                spec.display.label = ov.label.clone();
            }
            if ov.short_label.is_some() {
                spec.display.short_label = ov.short_label.clone();
            }
            if let Some(prefix) = &ov.prefix {
                spec.display.prefix = prefix.clone();
            }
            if let Some(decimals) = ov.decimals {
                spec.display.decimals = decimals;
            }
        }
        Self::from_parts(self.records, self.targets, specs)
    }

    /// Rows `indices` as a new dataset sharing this dataset's feature metadata.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        let targets = indices.iter().map(|&i| self.targets[i]).collect();
        Self::from_parts(records, targets, self.specs.clone())
    }

    pub fn n_rows(&self) -> usize {
        self.records.len()
    }

    pub fn n_features(&self) -> usize {
        self.specs.len()
    }

    pub fn records(&self) -> &[Vec<f64>] {
        &self.records
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.records[i]
    }

    pub fn targets(&self) -> &[u8] {
        &self.targets
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r[j]).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn count_class(&self, class: u8) -> usize {
        self.targets.iter().filter(|&&t| t == class).count()
    }

    pub fn mutable_indices(&self) -> Vec<usize> {
        mutable_indices(&self.specs)
    }

    /// Checks that `x` has the right length, is finite and lies in the box.
    pub fn check_instance(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        for (v, spec) in x.iter().zip(&self.specs) {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("feature {:?} = {v}", spec.name)));
            }
            if !spec.contains(*v) {
                return Err(Error::OutOfBounds {
                    feature: spec.name.clone(),
                });
            }
        }
        Ok(())
    }

    /// Writes the dataset as CSV with the target in a trailing column.
    pub fn write_csv(&self, path: impl AsRef<Path>, target_column: &str) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header = self.names();
        header.push(target_column.to_string());
        writer.write_record(&header)?;
        for (row, target) in self.records.iter().zip(&self.targets) {
            let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            fields.push(target.to_string());
            writer.write_record(&fields)?;
        }
        writer.flush().map_err(|source| Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

pub fn mutable_indices(specs: &[FeatureSpec]) -> Vec<usize> {
    specs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.mutable)
        .map(|(j, _)| j)
        .collect()
}

fn validate_shape(records: &[Vec<f64>], targets: &[u8], p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidDataset("no features".into()));
    }
    if records.len() != targets.len() {
        return Err(Error::InvalidDataset(format!(
            "{} rows but {} targets",
            records.len(),
            targets.len()
        )));
    }
    for (i, row) in records.iter().enumerate() {
        if row.len() != p {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} values, expected {p}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("row {i} contains {v}")));
        }
    }
    if let Some(t) = targets.iter().find(|&&t| t > 1) {
        return Err(Error::InvalidTarget(format!(
            "target value {t} is not 0 or 1"
        )));
    }
    for class in [0u8, 1] {
        let count = targets.iter().filter(|&&t| t == class).count();
        if count == 0 {
            return Err(Error::TooFewPerClass {
                class,
                count,
                required: 1,
            });
        }
    }
    Ok(())
}

fn min_max(column: &[f64]) -> (f64, f64) {
    column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Median with mean-of-middle-two for even lengths. `values` must be non-empty.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Median absolute deviation from the median. Returns 0 for an empty or
/// constant column.
pub fn compute_mad(column: &[f64]) -> f64 {
    if column.is_empty() {
        return 0.0;
    }
    let center = median(column);
    let deviations: Vec<f64> = column.iter().map(|v| (v - center).abs()).collect();
    median(&deviations)
}

/// MAD, or `1.4826 × mean absolute deviation from the mean` when the MAD is
/// zero on a non-constant column. The flag reports whether the fallback fired.
pub fn robust_scale(column: &[f64]) -> (f64, bool) {
    let mad = compute_mad(column);
    if mad > 0.0 {
        return (mad, false);
    }
    let (lo, hi) = min_max(column);
    if column.is_empty() || lo == hi {
        return (0.0, false);
    }
    let mean = column.iter().sum::<f64>() / column.len() as f64;
    let mean_abs = column.iter().map(|v| (v - mean).abs()).sum::<f64>() / column.len() as f64;
    (MAD_FALLBACK_SCALE * mean_abs, true)
}

/// Sample Pearson correlation; 0 when either column is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Smallest number of decimals (capped) that prints every value exactly.
fn infer_decimals(column: &[f64]) -> u32 {
    let mut needed = 0;
    for &v in column {
        while needed < MAX_DECIMALS {
            let scaled = v * 10f64.powi(needed as i32);
            if (scaled - scaled.round()).abs() <= 1e-9 * scaled.abs().max(1.0) {
                break;
            }
            needed += 1;
        }
        if needed == MAX_DECIMALS {
            break;
        }
    }
    needed
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::NonNumeric {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

const POSITIVE_LABELS: [&str; 7] = [
    "1", "good", "yes", "true", "accepted", "approved", "positive",
];

/// Maps the two distinct target labels to {0, 1}. Numeric labels: the larger
/// is 1. Otherwise a recognised positive label (e.g. `Good`) is 1, else the
/// lexicographically greater label is 1.
fn target_mapping(labels: &[String]) -> Result<BTreeMap<String, u8>> {
    let mut distinct: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != 2 {
        return Err(Error::InvalidTarget(format!(
            "expected exactly two distinct values, found {}",
            distinct.len()
        )));
    }
    let (a, b) = (distinct[0], distinct[1]);
    let positive = match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => {
            if x > y {
                a
            } else {
                b
            }
        }
        _ => {
            let is_pos = |s: &str| POSITIVE_LABELS.contains(&s.to_ascii_lowercase().as_str());
            match (is_pos(a), is_pos(b)) {
                (true, false) => a,
                _ => b,
            }
        }
    };
    Ok(distinct
        .into_iter()
        .map(|s| (s.to_string(), u8::from(s == positive)))
        .collect())
}

/// Reads a headered CSV. Every non-target column must be numeric; missing
/// cells are rejected. Requires at least two rows per class.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingTargetColumn(target_column.to_string()))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut records = Vec::new();
    let mut labels = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let mut values = Vec::with_capacity(names.len());
        for (j, cell) in row.iter().enumerate() {
            if j == target_idx {
                labels.push(cell.trim().to_string());
            } else {
                values.push(parse_cell(cell, i + 1, &headers[j])?);
            }
        }
        records.push(values);
    }
    let mapping = target_mapping(&labels)?;
    let targets: Vec<u8> = labels.iter().map(|l| mapping[l]).collect();
    for class in [0u8, 1] {
        let count = targets.iter().filter(|&&t| t == class).count();
        if count < 2 {
            return Err(Error::TooFewPerClass {
                class,
                count,
                required: 2,
            });
        }
    }
    Dataset::new(records, targets, names)
}

/// Drops one column of every highly correlated pair (keeping the earlier one)
/// and removes exact-duplicate rows (features and target), repeating both
/// steps until nothing changes so the result is a fixed point.
pub fn preprocess(raw: &Dataset, corr_threshold: f64) -> Result<Dataset> {
    if !(corr_threshold > 0.0 && corr_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "correlation threshold {corr_threshold} outside (0, 1]"
        )));
    }
    let mut current = raw.clone();
    loop {
        let keep = uncorrelated_columns(&current, corr_threshold);
        if keep.is_empty() {
            return Err(Error::AllFeaturesDropped(corr_threshold));
        }
        let p_before = current.n_features();
        let n_before = current.n_rows();
        let mut seen = HashSet::new();
        let mut records = Vec::new();
        let mut targets = Vec::new();
        for (row, &t) in current.records.iter().zip(&current.targets) {
            let projected: Vec<f64> = keep.iter().map(|&j| row[j]).collect();
            let mut key: Vec<u64> = projected.iter().map(|v| canonical_bits(*v)).collect();
            key.push(u64::from(t));
            if seen.insert(key) {
                records.push(projected);
                targets.push(t);
            }
        }
        let specs = keep.iter().map(|&j| current.specs[j].clone()).collect();
        let next = Dataset::from_parts(records, targets, specs)?;
        if next.n_features() == p_before && next.n_rows() == n_before {
            return Ok(next);
        }
        current = next;
    }
}

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 are the same value
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn uncorrelated_columns(data: &Dataset, threshold: f64) -> Vec<usize> {
    let columns: Vec<Vec<f64>> = (0..data.n_features()).map(|j| data.column(j)).collect();
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..columns.len() {
        if keep
            .iter()
            .all(|&k| pearson(&columns[k], &columns[j]).abs() < threshold)
        {
            keep.push(j);
        }
    }
    keep
}

/// Parameters of the synthetic two-cluster generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub p: usize,
    /// Number of leading features whose mean depends on the class.
    pub informative: usize,
    /// Distance between class means (in standard deviations) on the most
    /// informative feature; later informative features get linearly less,
    /// down to half of it.
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(n: usize, p: usize, seed: u64) -> Self {
        Self {
            n,
            p,
            informative: (p / 4).max(2).min(p),
            separation: 1.5,
            seed,
        }
    }
}

/// Deterministic two-class synthetic data with the default configuration.
pub fn gen_synthetic(n: usize, p: usize, seed: u64) -> Result<Dataset> {
    gen_synthetic_with(&SyntheticConfig::new(n, p, seed))
}

/// Informative features are Gaussian with class-dependent means; the rest are
/// unit-variance uniform noise. Feature `j` is scaled by `10^(j mod 3)` so the
/// columns live on different units. Classes alternate before shuffling, so
/// they are balanced to within one row.
pub fn gen_synthetic_with(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.n < 100 || cfg.p < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs n >= 100 and p >= 2 (got n={}, p={})",
            cfg.n, cfg.p
        )));
    }
    if cfg.informative > cfg.p || !(cfg.separation.is_finite() && cfg.separation >= 0.0) {
        return Err(Error::InvalidArgument(
            "bad informative count or separation".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let half_width = 3f64.sqrt();
    let shifts: Vec<f64> = (0..cfg.informative)
        .map(|j| {
            let frac = if cfg.informative > 1 {
                j as f64 / (cfg.informative - 1) as f64
            } else {
                0.0
            };
            cfg.separation * (1.0 - 0.5 * frac)
        })
        .collect();

    let mut rows: Vec<(Vec<f64>, u8)> = (0..cfg.n)
        .map(|i| {
            let class = (i % 2) as u8;
            let sign = if class == 1 { 0.5 } else { -0.5 };
            let row = (0..cfg.p)
                .map(|j| {
                    let z = if j < cfg.informative {
                        sign * shifts[j] + normal.sample(&mut rng)
                    } else {
                        rng.gen_range(-half_width..half_width)
                    };
                    z * 10f64.powi((j % 3) as i32)
                })
                .collect();
            (row, class)
        })
        .collect();
    rows.shuffle(&mut rng);
    let names = (0..cfg.p).map(|j| format!("feature_{j:02}")).collect();
    let (records, targets) = rows.into_iter().unzip();
    Dataset::new(records, targets, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::io::Write;

    fn csv_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("c{j}")).collect()
    }

    /// Literal double-median, written independently of `compute_mad`.
    fn mad_oracle(column: &[f64]) -> f64 {
        fn med(v: &mut [f64]) -> f64 {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = v.len();
            if n.is_multiple_of(2) {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            } else {
                v[(n - 1) / 2]
            }
        }
        let m = med(&mut column.to_vec());
        let mut dev: Vec<f64> = column.iter().map(|x| (x - m).abs()).collect();
        med(&mut dev)
    }

    #[test]
    fn mad_hand_values() {
        assert_eq!(compute_mad(&[1.0, 2.0, 3.0, 4.0, 5.0]), 1.0);
        assert_eq!(compute_mad(&[7.0, 7.0, 7.0]), 0.0);
        // even length: median 2.5, deviations {1.5, .5, .5, 1.5} -> 1.0
        assert_eq!(compute_mad(&[1.0, 2.0, 3.0, 4.0]), 1.0);
    }

    #[test]
    fn mad_matches_oracle_on_random_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let column: Vec<f64> = (0..100).map(|_| rng.gen_range(-50.0..50.0)).collect();
        assert_eq!(compute_mad(&column), mad_oracle(&column));
    }

    #[test]
    fn mad_fallback_on_spiky_column() {
        // more than half the values equal the median -> MAD 0, not constant
        let column = [0.0, 0.0, 0.0, 0.0, 10.0];
        assert_eq!(compute_mad(&column), 0.0);
        let (scale, fallback) = robust_scale(&column);
        assert!(fallback);
        // mean 2, mean |x - 2| = (2*4 + 8)/5 = 3.2
        assert!((scale - MAD_FALLBACK_SCALE * 3.2).abs() < 1e-12);
    }

    #[test]
    fn constant_column_becomes_immutable() {
        let records = vec![
            vec![1.0, 5.0],
            vec![2.0, 5.0],
            vec![3.0, 5.0],
            vec![4.0, 5.0],
        ];
        let d = Dataset::new(records, vec![0, 1, 0, 1], names(2)).unwrap();
        assert!(d.specs()[0].mutable);
        assert!(!d.specs()[1].mutable);
        assert_eq!(d.specs()[1].mad, 0.0);
    }

    #[test]
    fn load_small_csv() {
        let f = csv_file("a,b,target\n1,2,0\n3,4,1\n5,6,0\n7,8.5,1\n");
        let d = load_csv(f.path(), "target").unwrap();
        assert_eq!(d.n_rows(), 4);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.targets(), &[0, 1, 0, 1]);
        assert_eq!(d.specs()[1].lower, 2.0);
        assert_eq!(d.specs()[1].upper, 8.5);
        assert_eq!(d.specs()[1].display.decimals, 1);
        assert!(d.specs().iter().all(|s| s.mutable));
    }

    #[test]
    fn load_csv_maps_string_labels() {
        let f = csv_file("RiskPerformance,x\nBad,1\nGood,2\nGood,3\nBad,4\n");
        let d = load_csv(f.path(), "RiskPerformance").unwrap();
        assert_eq!(d.targets(), &[0, 1, 1, 0]);
        assert_eq!(d.names(), vec!["x".to_string()]);
    }

    #[test]
    fn load_csv_errors() {
        let one_class = csv_file("a,target\n1,1\n2,1\n3,1\n");
        assert!(matches!(
            load_csv(one_class.path(), "target"),
            Err(Error::InvalidTarget(_))
        ));
        let few = csv_file("a,target\n1,1\n2,1\n3,0\n");
        assert!(matches!(
            load_csv(few.path(), "target"),
            Err(Error::TooFewPerClass { class: 0, .. })
        ));
        let text = csv_file("a,target\n1,1\nx,0\n");
        assert!(matches!(
            load_csv(text.path(), "target"),
            Err(Error::NonNumeric { .. })
        ));
        let missing = csv_file("a,target\n1,1\n,0\n");
        assert!(matches!(
            load_csv(missing.path(), "target"),
            Err(Error::NonNumeric { .. })
        ));
        let f = csv_file("a,b\n1,1\n2,0\n");
        assert!(matches!(
            load_csv(f.path(), "target"),
            Err(Error::MissingTargetColumn(_))
        ));
        assert!(matches!(
            load_csv("/no/such/file.csv", "t"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn metadata_overrides() {
        let records = vec![
            vec![1.0, 10.0],
            vec![2.0, 20.0],
            vec![3.0, 30.0],
            vec![4.0, 40.0],
        ];
        let d = Dataset::new(records, vec![0, 1, 0, 1], names(2)).unwrap();
        let meta: FeatureMetadata = serde_json::from_str(
            r#"{"c1": {"lower": 0, "upper": 100, "mutable": false, "prefix": "$"}}"#,
        )
        .unwrap();
        let d = d.with_metadata(&meta).unwrap();
        assert_eq!(d.specs()[1].lower, 0.0);
        assert_eq!(d.specs()[1].upper, 100.0);
        assert!(!d.specs()[1].mutable);
        assert_eq!(d.specs()[1].display.prefix, "$");
        assert!(d.specs()[0].mutable);

        let narrow: FeatureMetadata = serde_json::from_str(r#"{"c0": {"upper": 2}}"#).unwrap();
        assert!(d.clone().with_metadata(&narrow).is_err());
        let unknown: FeatureMetadata = serde_json::from_str(r#"{"zz": {}}"#).unwrap();
        assert!(d.with_metadata(&unknown).is_err());
    }

    #[test]
    fn preprocess_drops_duplicated_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let records: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let a: f64 = rng.gen();
                let b: f64 = rng.gen();
                vec![a, b, a]
            })
            .collect();
        let targets = (0..50).map(|i| (i % 2) as u8).collect();
        let d = Dataset::new(records, targets, names(3)).unwrap();
        let out = preprocess(&d, 0.95).unwrap();
        assert_eq!(out.names(), vec!["c0".to_string(), "c1".to_string()]);
    }

    #[test]
    fn preprocess_dedupes_rows() {
        let records = vec![
            vec![1.0, 3.0],
            vec![1.0, 3.0],
            vec![2.0, 1.0],
            vec![5.0, 4.0],
        ];
        let d = Dataset::new(records, vec![1, 1, 0, 0], names(2)).unwrap();
        let out = preprocess(&d, 0.95).unwrap();
        assert_eq!(out.n_rows(), 3);
    }

    #[test]
    fn preprocess_keeps_independent_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        let records: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..5).map(|_| rng.gen()).collect())
            .collect();
        let targets: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        // brute-force correlation check
        for a in 0..5 {
            for b in (a + 1)..5 {
                let xs: Vec<f64> = records.iter().map(|r| r[a]).collect();
                let ys: Vec<f64> = records.iter().map(|r| r[b]).collect();
                let mx = xs.iter().sum::<f64>() / n as f64;
                let my = ys.iter().sum::<f64>() / n as f64;
                let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
                let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
                let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
                let r = cov / (vx * vy).sqrt();
                assert!(r.abs() < 0.95);
                assert!((r - pearson(&xs, &ys)).abs() < 1e-12);
            }
        }
        let d = Dataset::new(records, targets, names(5)).unwrap();
        assert_eq!(preprocess(&d, 0.95).unwrap().n_features(), 5);
    }

    #[test]
    fn preprocess_rejects_threshold_outside_unit_interval() {
        let d = gen_synthetic(200, 3, 1).unwrap();
        assert!(matches!(
            preprocess(&d, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            preprocess(&d, 1.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn synthetic_is_deterministic_and_balanced() {
        let a = gen_synthetic(2000, 20, 7).unwrap();
        let b = gen_synthetic(2000, 20, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count_class(1), 1000);
        assert_ne!(a, gen_synthetic(2000, 20, 8).unwrap());
        assert!(gen_synthetic(50, 20, 7).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mad_permutation_invariant(mut column in prop::collection::vec(-1e3f64..1e3, 1..60), seed in any::<u64>()) {
            let before = compute_mad(&column);
            column.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(before, compute_mad(&column));
        }

        #[test]
        fn mad_scale_equivariant(column in prop::collection::vec(-1e3f64..1e3, 1..60), c in -100.0f64..100.0) {
            let scaled: Vec<f64> = column.iter().map(|v| c * v).collect();
            let lhs = compute_mad(&scaled);
            let rhs = c.abs() * compute_mad(&column);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        }

        #[test]
        fn preprocess_idempotent(seed in 0u64..500, dup in 0usize..3) {
            let base = gen_synthetic(120, 4, seed).unwrap();
            let mut records = base.records().to_vec();
            let mut targets = base.targets().to_vec();
            // add duplicated rows and a near-copy column
            for i in 0..dup { records.push(records[i].clone()); targets.push(targets[i]); }
            for r in records.iter_mut() { let v = r[0] * 2.0 + 1.0; r.push(v); }
            let d = Dataset::new(records, targets, names(5)).unwrap();
            let once = preprocess(&d, 0.95).unwrap();
            let twice = preprocess(&once, 0.95).unwrap();
            prop_assert_eq!(once.n_features(), 4);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn loaded_rows_within_bounds(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 4..30)) {
            let mut text = String::from("a,b,c,target\n");
            for (i, r) in rows.iter().enumerate() {
                text.push_str(&format!("{},{},{},{}\n", r[0], r[1], r[2], i % 2));
            }
            let f = csv_file(&text);
            let d = load_csv(f.path(), "target").unwrap();
            for row in d.records() {
                for (v, s) in row.iter().zip(d.specs()) {
                    prop_assert!(s.lower <= *v && *v <= s.upper);
                }
            }
        }
    }
}
