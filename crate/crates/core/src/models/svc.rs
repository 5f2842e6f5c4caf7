use serde::{Deserialize, Serialize};

use super::{sample_weights, sigmoid, Predictor, Scaler};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearSvcConfig {
    pub c: f64,
    pub balanced: bool,
    pub max_iter: usize,
    /// Converged once the best objective improves by less than this
    /// (relative) over `patience` iterations.
    pub tol: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for LinearSvcConfig {
    fn default() -> Self {
        Self {
            c: 1e-3,
            balanced: true,
            max_iter: 5_000,
            tol: 1e-6,
            patience: 200,
            seed: 0,
        }
    }
}

/// Linear hinge-loss classifier with a logistic calibration of its margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvc {
    pub scaler: Scaler,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub platt_a: f64,
    pub platt_b: f64,
}

impl LinearSvc {
    /// Raw decision value `w·z + b`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut m = self.bias;
        for (j, w) in self.weights.iter().enumerate() {
            m += w * self.scaler.scale(j, x[j]);
        }
        m
    }
}

impl Predictor for LinearSvc {
    fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.platt_a * self.decision(x) + self.platt_b)
    }
}

/// `0.5‖w‖² + C Σ s_i max(0, 1 − ỹ_i (w·z_i + b))`, with the intercept
/// treated as the weight of a constant feature (and so regularised).
fn objective(rows: &[Vec<f64>], signs: &[f64], sw: &[f64], w: &[f64], c: f64) -> f64 {
    let p = rows[0].len();
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = rows
        .iter()
        .zip(signs)
        .zip(sw)
        .map(|((row, y), s)| {
            let m = w[p] + row.iter().zip(w).map(|(x, v)| x * v).sum::<f64>();
            s * (1.0 - y * m).max(0.0)
        })
        .sum();
    reg + c * hinge
}

/// Fits `σ(a m + b)` to labels by Newton's method with Platt's smoothed
/// targets.
fn platt_fit(margins: &[f64], targets: &[u8]) -> (f64, f64) {
    let pos = targets.iter().filter(|&&t| t == 1).count() as f64;
    let neg = targets.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    let labels: Vec<f64> = targets
        .iter()
        .map(|&t| if t == 1 { hi } else { lo })
        .collect();
    let nll = |a: f64, b: f64| -> f64 {
        margins
            .iter()
            .zip(&labels)
            .map(|(m, t)| {
                let z = a * m + b;
                let softplus = if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                };
                softplus - t * z
            })
            .sum()
    };
    let (mut a, mut b) = (1.0, 0.0);
    let mut current = nll(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (m, t) in margins.iter().zip(&labels) {
            let p = sigmoid(a * m + b);
            let r = p - t;
            let w = p * (1.0 - p);
            ga += r * m;
            gb += r;
            haa += w * m * m;
            hab += w * m;
            hbb += w;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-300 {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let (na, nb) = (a - step * da, b - step * db);
            let value = nll(na, nb);
            if value < current {
                a = na;
                b = nb;
                let gain = current - value;
                current = value;
                improved = gain > 1e-12 * current.abs().max(1.0);
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

/// Deterministic full-batch subgradient descent with the `1/(λt)` step and
/// ball projection (Pegasos), keeping the best iterate seen.
pub fn train_linear_svc(data: &Dataset, cfg: &LinearSvcConfig) -> Result<LinearSvc> {
    if !(cfg.c > 0.0) {
        return Err(Error::InvalidArgument("svc needs c > 0".into()));
    }
    let scaler = Scaler::fit(data);
    let rows = scaler.transform_all(data);
    let p = data.n_features();
    let signs: Vec<f64> = data
        .targets()
        .iter()
        .map(|&t| if t == 1 { 1.0 } else { -1.0 })
        .collect();
    let sw = sample_weights(data.targets(), cfg.balanced);
    let n = rows.len() as f64;
    // objective / (C n) = λ/2 ‖w‖² + mean hinge, with λ = 1 / (C n)
    let lambda = 1.0 / (cfg.c * n);
    let radius = 1.0 / lambda.sqrt();

    let mut w = vec![0.0; p + 1];
    let mut best_w = w.clone();
    let mut best_obj = objective(&rows, &signs, &sw, &w, cfg.c);
    let mut reference = best_obj;
    let mut since_reference = 0;
    let mut converged = false;
    for t in 1..=cfg.max_iter {
        let eta = 1.0 / (lambda * t as f64);
        let mut grad: Vec<f64> = w.iter().map(|v| lambda * v).collect();
        for ((row, y), s) in rows.iter().zip(&signs).zip(&sw) {
            let m = w[p] + row.iter().zip(&w).map(|(x, v)| x * v).sum::<f64>();
            if y * m < 1.0 {
                for (g, x) in grad.iter_mut().zip(row) {
                    *g -= s * y * x / n;
                }
                grad[p] -= s * y / n;
            }
        }
        for (v, g) in w.iter_mut().zip(&grad) {
            *v -= eta * g;
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            w.iter_mut().for_each(|v| *v *= radius / norm);
        }
        let obj = objective(&rows, &signs, &sw, &w, cfg.c);
        if !obj.is_finite() {
            return Err(Error::Diverged(format!("svc objective became {obj}")));
        }
        if obj < best_obj {
            best_obj = obj;
            best_w.clone_from(&w);
        }
        since_reference += 1;
        if since_reference >= cfg.patience {
            if reference - best_obj <= cfg.tol * reference.abs().max(1e-12) {
                converged = true;
                break;
            }
            reference = best_obj;
            since_reference = 0;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            model: "svc",
            iterations: cfg.max_iter,
        });
    }
    let bias = best_w[p];
    best_w.truncate(p);
    let mut model = LinearSvc {
        scaler,
        weights: best_w,
        bias,
        platt_a: 1.0,
        platt_b: 0.0,
    };
    let margins: Vec<f64> = data.records().iter().map(|r| model.decision(r)).collect();
    let (a, b) = platt_fit(&margins, data.targets());
    model.platt_a = a;
    model.platt_b = b;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    #[test]
    fn separable_toy_is_fit_perfectly() {
        let records = vec![
            vec![0.0, 1.0],
            vec![1.0, 0.5],
            vec![0.5, 0.0],
            vec![3.0, 2.0],
            vec![4.0, 3.5],
            vec![3.5, 4.0],
        ];
        let data = Dataset::new(
            records,
            vec![0, 0, 0, 1, 1, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let cfg = LinearSvcConfig {
            c: 1.0,
            ..LinearSvcConfig::default()
        };
        let model = train_linear_svc(&data, &cfg).unwrap();
        for (row, &t) in data.records().iter().zip(data.targets()) {
            assert_eq!(model.classify(row), t);
        }
    }

    #[test]
    fn calibrated_score_monotone_in_margin() {
        let data = gen_synthetic(400, 5, 8).unwrap();
        let model = train_linear_svc(&data, &LinearSvcConfig::default()).unwrap();
        assert!(model.platt_a > 0.0);
        let mut pairs: Vec<(f64, f64)> = data
            .records()
            .iter()
            .map(|r| (model.decision(r), model.score(r)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn platt_recovers_known_link() {
        // labels drawn deterministically from σ(2m − 0.5) via a fine grid
        let mut margins = Vec::new();
        let mut targets = Vec::new();
        for i in 0..2000 {
            let m = -3.0 + 6.0 * (i as f64) / 2000.0;
            let p = sigmoid(2.0 * m - 0.5);
            let frac = ((i * 7919) % 1000) as f64 / 1000.0;
            margins.push(m);
            targets.push(u8::from(frac < p));
        }
        let (a, b) = platt_fit(&margins, &targets);
        assert!((a - 2.0).abs() < 0.3 && (b + 0.5).abs() < 0.3, "{a} {b}");
    }

    #[test]
    fn rejects_bad_c_and_reports_non_convergence() {
        let data = gen_synthetic(200, 4, 2).unwrap();
        let bad = LinearSvcConfig {
            c: 0.0,
            ..LinearSvcConfig::default()
        };
        assert!(train_linear_svc(&data, &bad).is_err());
        let short = LinearSvcConfig {
            max_iter: 10,
            ..LinearSvcConfig::default()
        };
        assert!(matches!(
            train_linear_svc(&data, &short),
            Err(Error::NonConvergence { .. })
        ));
    }
}
