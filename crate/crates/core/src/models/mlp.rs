use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Predictor, Scaler};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_units: 22,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            epochs: 100,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// One hidden layer, logistic activations everywhere.
///
/// `params` is laid out as the hidden weight matrix (row per unit), hidden
/// biases, output weights, output bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub scaler: Scaler,
    pub hidden_units: usize,
    pub params: Vec<f64>,
}

struct Layout {
    p: usize,
    h: usize,
}

impl Layout {
    fn w1(&self, k: usize, j: usize) -> usize {
        k * self.p + j
    }
    fn b1(&self, k: usize) -> usize {
        self.h * self.p + k
    }
    fn w2(&self, k: usize) -> usize {
        self.h * self.p + self.h + k
    }
    fn b2(&self) -> usize {
        self.h * self.p + 2 * self.h
    }
    fn len(&self) -> usize {
        self.b2() + 1
    }
}

fn forward(params: &[f64], layout: &Layout, z: &[f64], hidden: &mut [f64]) -> f64 {
    let mut out = params[layout.b2()];
    for k in 0..layout.h {
        let mut a = params[layout.b1(k)];
        let row = &params[layout.w1(k, 0)..layout.w1(k, 0) + layout.p];
        for (w, x) in row.iter().zip(z) {
            a += w * x;
        }
        hidden[k] = sigmoid(a);
        out += params[layout.w2(k)] * hidden[k];
    }
    out
}

/// Mean cross-entropy plus `l2/2 · Σ w²` (biases unpenalised) and its
/// gradient with respect to `params`, for standardised `rows`.
pub(crate) fn loss_and_gradient(
    params: &[f64],
    hidden_units: usize,
    rows: &[&[f64]],
    targets: &[u8],
    l2: f64,
) -> (f64, Vec<f64>) {
    let layout = Layout {
        p: rows.first().map_or(0, |r| r.len()),
        h: hidden_units,
    };
    let n = rows.len() as f64;
    let mut grad = vec![0.0; layout.len()];
    let mut hidden = vec![0.0; layout.h];
    let mut loss = 0.0;
    for (z, &t) in rows.iter().zip(targets) {
        let a2 = forward(params, &layout, z, &mut hidden);
        let y = f64::from(t);
        let softplus = if a2 > 0.0 {
            a2 + (-a2).exp().ln_1p()
        } else {
            a2.exp().ln_1p()
        };
        loss += softplus - y * a2;
        let d_out = sigmoid(a2) - y;
        grad[layout.b2()] += d_out;
        for k in 0..layout.h {
            grad[layout.w2(k)] += d_out * hidden[k];
            let d_a1 = d_out * params[layout.w2(k)] * hidden[k] * (1.0 - hidden[k]);
            grad[layout.b1(k)] += d_a1;
            for (j, x) in z.iter().enumerate() {
                grad[layout.w1(k, j)] += d_a1 * x;
            }
        }
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    let mut penalty = 0.0;
    for k in 0..layout.h {
        for j in 0..layout.p {
            let i = layout.w1(k, j);
            penalty += params[i] * params[i];
            grad[i] += l2 * params[i];
        }
        let i = layout.w2(k);
        penalty += params[i] * params[i];
        grad[i] += l2 * params[i];
    }
    (loss + 0.5 * l2 * penalty, grad)
}

impl Predictor for Mlp {
    fn score(&self, x: &[f64]) -> f64 {
        let layout = Layout {
            p: self.scaler.n_features(),
            h: self.hidden_units,
        };
        let z = self.scaler.transform(x);
        let mut hidden = vec![0.0; self.hidden_units];
        sigmoid(forward(&self.params, &layout, &z, &mut hidden))
    }
}

/// Mini-batch gradient descent with momentum. Initial weights are drawn
/// uniformly in `±sqrt(2 / (fan_in + fan_out))`.
pub fn train_mlp(data: &Dataset, cfg: &MlpConfig) -> Result<Mlp> {
    if cfg.hidden_units == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "mlp needs hidden_units >= 1, batch_size >= 1 and a positive learning rate".into(),
        ));
    }
    let scaler = Scaler::fit(data);
    let rows = scaler.transform_all(data);
    let layout = Layout {
        p: data.n_features(),
        h: cfg.hidden_units,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = vec![0.0; layout.len()];
    let bound1 = (2.0 / (layout.p + layout.h) as f64).sqrt();
    let bound2 = (2.0 / (layout.h + 1) as f64).sqrt();
    for k in 0..layout.h {
        for j in 0..layout.p {
            params[layout.w1(k, j)] = rng.gen_range(-bound1..bound1);
        }
        params[layout.b1(k)] = rng.gen_range(-bound1..bound1);
        params[layout.w2(k)] = rng.gen_range(-bound2..bound2);
    }
    params[layout.b2()] = rng.gen_range(-bound2..bound2);

    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let batch_rows: Vec<&[f64]> = batch.iter().map(|&i| rows[i].as_slice()).collect();
            let batch_targets: Vec<u8> = batch.iter().map(|&i| data.targets()[i]).collect();
            let (loss, grad) = loss_and_gradient(
                &params,
                cfg.hidden_units,
                &batch_rows,
                &batch_targets,
                cfg.l2,
            );
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "mlp loss became {loss}; lower the learning rate"
                )));
            }
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
        }
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Diverged("mlp parameters became non-finite".into()));
    }
    Ok(Mlp {
        scaler,
        hidden_units: cfg.hidden_units,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn xor_data() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = Normal::new(0.0, 0.15).unwrap();
        let mut records = Vec::new();
        let mut targets = Vec::new();
        for i in 0..400 {
            let (a, b) = ((i % 2) as f64, ((i / 2) % 2) as f64);
            records.push(vec![a + noise.sample(&mut rng), b + noise.sample(&mut rng)]);
            targets.push(((i % 2) ^ ((i / 2) % 2)) as u8);
        }
        Dataset::new(records, targets, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn learns_xor() {
        let data = xor_data();
        let cfg = MlpConfig {
            hidden_units: 8,
            learning_rate: 0.1,
            epochs: 300,
            ..MlpConfig::default()
        };
        let model = train_mlp(&data, &cfg).unwrap();
        let correct = data
            .records()
            .iter()
            .zip(data.targets())
            .filter(|(r, &t)| model.classify(r) == t)
            .count();
        let acc = correct as f64 / data.n_rows() as f64;
        assert!(acc > 0.95, "xor accuracy {acc}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (p, h) = (4, 5);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let targets: Vec<u8> = (0..30).map(|i| (i % 3 == 0) as u8).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let n_params = h * (p + 2) + 1;
        for trial in 0..3 {
            let params: Vec<f64> = (0..n_params).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let (_, grad) = loss_and_gradient(&params, h, &refs, &targets, 0.01);
            for _ in 0..5 {
                let i = rng.gen_range(0..n_params);
                let eps = 1e-5;
                let mut plus = params.clone();
                plus[i] += eps;
                let mut minus = params.clone();
                minus[i] -= eps;
                let numeric = (loss_and_gradient(&plus, h, &refs, &targets, 0.01).0
                    - loss_and_gradient(&minus, h, &refs, &targets, 0.01).0)
                    / (2.0 * eps);
                let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-8);
                assert!(
                    rel < 1e-4,
                    "trial {trial} param {i}: {numeric} vs {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn diverging_learning_rate_is_reported() {
        let data = xor_data();
        let cfg = MlpConfig {
            learning_rate: 1e200,
            epochs: 5,
            ..MlpConfig::default()
        };
        assert!(matches!(train_mlp(&data, &cfg), Err(Error::Diverged(_))));
        let zero = MlpConfig {
            hidden_units: 0,
            ..MlpConfig::default()
        };
        assert!(train_mlp(&data, &zero).is_err());
    }
}
