use serde::{Deserialize, Serialize};

use super::{sample_weights, sigmoid, Predictor, Scaler};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub l2: f64,
    pub balanced: bool,
    pub learning_rate: f64,
    /// `0` returns the untrained (all-zero) model.
    pub max_iter: usize,
    /// Stop once the loss changes by less than this between iterations.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            balanced: true,
            learning_rate: 1.0,
            max_iter: 20_000,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// Logistic regression on standardised features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub scaler: Scaler,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogReg {
    /// Linear score in standardised space.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let mut z = self.bias;
        for (j, w) in self.weights.iter().enumerate() {
            z += w * self.scaler.scale(j, x[j]);
        }
        z
    }
}

impl Predictor for LogReg {
    fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

fn loss_and_grad(
    rows: &[Vec<f64>],
    targets: &[u8],
    sw: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for ((row, &t), &s) in rows.iter().zip(targets).zip(sw) {
        let z = bias + row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>();
        let y = f64::from(t);
        // log(1 + e^z) − y z, computed stably
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += s * (softplus - y * z);
        let residual = s * (sigmoid(z) - y);
        for (g, x) in grad.iter_mut().zip(row) {
            *g += residual * x;
        }
        grad_b += residual;
    }
    loss /= n;
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (loss, grad, grad_b / n)
}

/// Full-batch gradient descent on the (optionally class-balanced) L2-penalised
/// log loss.
pub fn train_logreg(data: &Dataset, cfg: &LogRegConfig) -> Result<LogReg> {
    if !(cfg.l2 >= 0.0) || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "logreg needs l2 >= 0 and learning_rate > 0".into(),
        ));
    }
    let scaler = Scaler::fit(data);
    let rows = scaler.transform_all(data);
    let sw = sample_weights(data.targets(), cfg.balanced);
    let mut weights = vec![0.0; data.n_features()];
    let mut bias = 0.0;
    if cfg.max_iter == 0 {
        return Ok(LogReg {
            scaler,
            weights,
            bias,
        });
    }
    let mut previous = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let (loss, grad, grad_b) =
            loss_and_grad(&rows, data.targets(), &sw, &weights, bias, cfg.l2);
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("logreg loss became {loss}")));
        }
        if (previous - loss).abs() < cfg.tol {
            return Ok(LogReg {
                scaler,
                weights,
                bias,
            });
        }
        previous = loss;
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= cfg.learning_rate * g;
        }
        bias -= cfg.learning_rate * grad_b;
    }
    Err(Error::NonConvergence {
        model: "logreg",
        iterations: cfg.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    fn toy() -> Dataset {
        let records = vec![
            vec![0.0, 1.0],
            vec![1.0, 0.5],
            vec![0.5, 0.0],
            vec![3.0, 2.0],
            vec![4.0, 3.5],
            vec![3.5, 4.0],
        ];
        Dataset::new(
            records,
            vec![0, 0, 0, 1, 1, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn separable_toy_is_fit_perfectly() {
        let data = toy();
        let model = train_logreg(&data, &LogRegConfig::default()).unwrap();
        for (row, &t) in data.records().iter().zip(data.targets()) {
            assert_eq!(model.classify(row), t);
        }
    }

    #[test]
    fn one_feature_fit_matches_closed_form_stationarity() {
        // unpenalised, unbalanced 1-feature fit: the gradient of the mean log
        // loss vanishes, i.e. Σ (p_i − y_i) = 0 and Σ (p_i − y_i) z_i = 0
        let data = gen_synthetic(300, 2, 5).unwrap();
        let cfg = LogRegConfig {
            l2: 0.0,
            balanced: false,
            tol: 1e-14,
            max_iter: 200_000,
            ..LogRegConfig::default()
        };
        let model = train_logreg(&data, &cfg).unwrap();
        let (mut g0, mut g1) = (0.0, 0.0);
        for (row, &t) in data.records().iter().zip(data.targets()) {
            let r = model.score(row) - f64::from(t);
            g0 += r;
            g1 += r * model.scaler.scale(0, row[0]);
        }
        assert!(
            g0.abs() / 300.0 < 1e-4 && g1.abs() / 300.0 < 1e-4,
            "{g0} {g1}"
        );
    }

    #[test]
    fn zero_iterations_returns_untrained_model() {
        let data = toy();
        let cfg = LogRegConfig {
            max_iter: 0,
            ..LogRegConfig::default()
        };
        let model = train_logreg(&data, &cfg).unwrap();
        assert!(model.weights.iter().all(|w| *w == 0.0));
        assert_eq!(model.score(&[0.0, 0.0]), 0.5);
    }

    #[test]
    fn reports_non_convergence() {
        let data = gen_synthetic(200, 4, 1).unwrap();
        let cfg = LogRegConfig {
            max_iter: 3,
            ..LogRegConfig::default()
        };
        assert!(matches!(
            train_logreg(&data, &cfg),
            Err(Error::NonConvergence { .. })
        ));
        let bad = LogRegConfig {
            l2: -1.0,
            ..LogRegConfig::default()
        };
        assert!(train_logreg(&data, &bad).is_err());
    }
}
