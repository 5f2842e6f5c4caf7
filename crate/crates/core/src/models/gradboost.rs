use serde::{Deserialize, Serialize};

use super::{sigmoid, Predictor, Scaler};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradBoostLoss {
    /// `exp(−ỹ F)` with `ỹ ∈ {−1, 1}`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradBoostConfig {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub loss: GradBoostLoss,
    pub seed: u64,
}

impl Default for GradBoostConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            loss: GradBoostLoss::Exponential,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        /// In standardised units; rows with `z <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    fn predict(&self, scaler: &Scaler, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if scaler.scale(feature, x[feature]) <= threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }
}

/// Boosted regression trees; the score is `σ(2F)` for ensemble margin `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradBoost {
    pub scaler: Scaler,
    pub loss: GradBoostLoss,
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl GradBoost {
    /// Ensemble margin using only the first `n_trees` trees.
    pub fn margin_with(&self, x: &[f64], n_trees: usize) -> f64 {
        self.init
            + self.trees[..n_trees.min(self.trees.len())]
                .iter()
                .map(|t| self.learning_rate * t.predict(&self.scaler, x))
                .sum::<f64>()
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.margin_with(x, self.trees.len())
    }

    /// Mean exponential loss on `data` of the first `n_trees` trees.
    pub fn training_loss(&self, data: &Dataset, n_trees: usize) -> f64 {
        data.records()
            .iter()
            .zip(data.targets())
            .map(|(row, &t)| (-signed(t) * self.margin_with(row, n_trees)).exp())
            .sum::<f64>()
            / data.n_rows() as f64
    }
}

impl Predictor for GradBoost {
    fn score(&self, x: &[f64]) -> f64 {
        sigmoid(2.0 * self.margin(x))
    }
}

fn signed(t: u8) -> f64 {
    if t == 1 {
        1.0
    } else {
        -1.0
    }
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    residuals: &'a [f64],
    /// Per-row `exp(−ỹF)` and `ỹ`, for the Newton leaf values.
    weights: &'a [f64],
    signs: &'a [f64],
    depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let num: f64 = idx.iter().map(|&i| self.weights[i] * self.signs[i]).sum();
        let den: f64 = idx.iter().map(|&i| self.weights[i]).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Best least-squares split of `idx` as (gain, feature, threshold).
    fn best_split(&self, idx: &[usize]) -> Option<(f64, usize, f64)> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.residuals[i]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.to_vec();
        for f in 0..self.rows[0].len() {
            sorted.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for pos in 0..n - 1 {
                left_sum += self.residuals[sorted[pos]];
                let left_n = pos + 1;
                let right_n = n - left_n;
                if left_n < self.min_leaf || right_n < self.min_leaf {
                    continue;
                }
                let (v, next) = (self.rows[sorted[pos]][f], self.rows[sorted[pos + 1]][f]);
                if v == next {
                    continue;
                }
                let right_sum = total - left_sum;
                // SSE reduction relative to the parent
                let gain = left_sum * left_sum / left_n as f64
                    + right_sum * right_sum / right_n as f64
                    - total * total / n as f64;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (v + next)));
                }
            }
        }
        best.filter(|(g, _, _)| *g > 1e-12)
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: self.leaf_value(idx),
        });
        if depth >= self.depth || idx.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((_, feature, threshold)) = self.best_split(idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.rows[i][feature] <= threshold);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Gradient boosting on the exponential loss: each tree fits the negative
/// gradient by least squares, then its leaves take the Newton step
/// `Σ w ỹ / Σ w` with `w = exp(−ỹF)`.
pub fn train_gradboost(data: &Dataset, cfg: &GradBoostConfig) -> Result<GradBoost> {
    if cfg.trees == 0 || cfg.depth == 0 || cfg.min_samples_leaf == 0 {
        return Err(Error::InvalidArgument(
            "gradboost needs trees, depth, min_samples_leaf >= 1".into(),
        ));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0) {
        return Err(Error::InvalidArgument(
            "gradboost learning_rate must be in (0, 1]".into(),
        ));
    }
    let scaler = Scaler::fit(data);
    let rows = scaler.transform_all(data);
    let first = &rows[0];
    if rows.iter().all(|r| r == first) {
        return Err(Error::DegenerateSplit(
            "all training rows are identical".into(),
        ));
    }
    let signs: Vec<f64> = data.targets().iter().map(|&t| signed(t)).collect();
    let pos = data.count_class(1) as f64;
    let neg = data.n_rows() as f64 - pos;
    let init = 0.5 * (pos / neg).ln();
    let mut margins = vec![init; rows.len()];
    let mut trees = Vec::with_capacity(cfg.trees);
    let all: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..cfg.trees {
        let weights: Vec<f64> = margins
            .iter()
            .zip(&signs)
            .map(|(f, y)| (-y * f).exp())
            .collect();
        let residuals: Vec<f64> = weights.iter().zip(&signs).map(|(w, y)| y * w).collect();
        let mut builder = TreeBuilder {
            rows: &rows,
            residuals: &residuals,
            weights: &weights,
            signs: &signs,
            depth: cfg.depth,
            min_leaf: cfg.min_samples_leaf,
            nodes: Vec::new(),
        };
        builder.build(&all, 0);
        let tree = RegressionTree {
            nodes: builder.nodes,
        };
        for (m, x) in margins.iter_mut().zip(data.records()) {
            *m += cfg.learning_rate * tree.predict(&scaler, x);
        }
        trees.push(tree);
    }
    Ok(GradBoost {
        scaler,
        loss: cfg.loss,
        init,
        learning_rate: cfg.learning_rate,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    #[test]
    fn single_stump_separates_threshold_data() {
        let records: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let targets: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let data = Dataset::new(records, targets, vec!["x".into()]).unwrap();
        let cfg = GradBoostConfig {
            trees: 1,
            depth: 1,
            ..GradBoostConfig::default()
        };
        let model = train_gradboost(&data, &cfg).unwrap();
        assert_eq!(model.trees[0].nodes.len(), 3);
        for (row, &t) in data.records().iter().zip(data.targets()) {
            assert_eq!(model.classify(row), t);
        }
    }

    #[test]
    fn training_loss_non_increasing_in_trees() {
        let data = gen_synthetic(500, 6, 12).unwrap();
        let cfg = GradBoostConfig {
            trees: 50,
            ..GradBoostConfig::default()
        };
        let model = train_gradboost(&data, &cfg).unwrap();
        let mut previous = model.training_loss(&data, 0);
        for n in 1..=50 {
            let loss = model.training_loss(&data, n);
            assert!(loss <= previous + 1e-12, "tree {n}: {loss} > {previous}");
            previous = loss;
        }
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let records = vec![vec![1.0, 2.0]; 4];
        let data = Dataset::new(records, vec![0, 1, 0, 1], vec!["a".into(), "b".into()]).unwrap();
        assert!(matches!(
            train_gradboost(&data, &GradBoostConfig::default()),
            Err(Error::DegenerateSplit(_))
        ));
    }
}
