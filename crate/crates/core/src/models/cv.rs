use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Anything that can fit a [`Predictor`] to a dataset.
pub trait Trainer: Sync {
    type Output: Predictor;

    fn fit(&self, data: &Dataset) -> Result<Self::Output>;

    /// Hyperparameters echoed into reports.
    fn hyperparams(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Unweighted mean over folds of the positive-class F1.
    pub f1: f64,
    /// Unweighted mean over folds.
    pub accuracy: f64,
    pub folds: usize,
    pub f1_std: f64,
    pub accuracy_std: f64,
    pub hyperparams: BTreeMap<String, serde_json::Value>,
}

/// Positive-class F1; `0` when there are no predicted and no actual positives.
pub fn f1_score(truth: &[u8], predicted: &[u8]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn accuracy(truth: &[u8], predicted: &[u8]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Fold index per row. Each class is shuffled with `seed` and dealt out
/// round-robin, so class proportions differ by at most one row per fold.
pub fn stratified_folds(targets: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; targets.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..targets.len())
            .filter(|&i| targets[i] == class)
            .collect();
        rows.shuffle(&mut rng);
        for i in rows {
            fold[i] = next % k;
            next += 1;
        }
    }
    for f in 0..k {
        for class in [0u8, 1] {
            if !targets
                .iter()
                .zip(&fold)
                .any(|(&t, &g)| t == class && g == f)
            {
                return Err(Error::SingleClassFold { fold: f });
            }
        }
    }
    Ok(fold)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Stratified k-fold cross-validation. Folds are fitted in parallel but
/// aggregated in fold order.
pub fn cross_validate<T: Trainer>(
    data: &Dataset,
    trainer: &T,
    k: usize,
    seed: u64,
) -> Result<TrainReport> {
    let fold = stratified_folds(data.targets(), k, seed)?;
    let scores: Vec<(f64, f64)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..data.n_rows()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..data.n_rows()).filter(|&i| fold[i] == f).collect();
            let model = trainer.fit(&data.subset(&train)?)?;
            let truth: Vec<u8> = test.iter().map(|&i| data.targets()[i]).collect();
            let predicted: Vec<u8> = test.iter().map(|&i| model.classify(data.row(i))).collect();
            Ok((f1_score(&truth, &predicted), accuracy(&truth, &predicted)))
        })
        .collect::<Result<_>>()?;
    let (f1, f1_std) = mean_std(&scores.iter().map(|s| s.0).collect::<Vec<_>>());
    let (acc, acc_std) = mean_std(&scores.iter().map(|s| s.1).collect::<Vec<_>>());
    Ok(TrainReport {
        f1,
        accuracy: acc,
        folds: k,
        f1_std,
        accuracy_std: acc_std,
        hyperparams: trainer.hyperparams(),
    })
}

/// Cross-validates every configuration and returns the one with the highest
/// mean F1, then accuracy, then earliest position.
pub fn grid_search<T: Trainer + Clone>(
    data: &Dataset,
    grid: &[T],
    k: usize,
    seed: u64,
) -> Result<(T, TrainReport)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    let mut best: Option<(usize, TrainReport)> = None;
    for (i, cfg) in grid.iter().enumerate() {
        let report = cross_validate(data, cfg, k, seed)?;
        let better = match &best {
            None => true,
            Some((_, b)) => report.f1 > b.f1 || (report.f1 == b.f1 && report.accuracy > b.accuracy),
        };
        if better {
            best = Some((i, report));
        }
    }
    let (i, report) = best.expect("grid is non-empty");
    Ok((grid[i].clone(), report))
}
