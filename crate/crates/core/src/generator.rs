//! Counterfactual search: minimise `λ (score(x′) − y′)² + d(x, x′)` with
//! Nelder-Mead, raising λ until the score lands within ε of the target.
//!
//! The simplex works on the mutable coordinates only, expressed in MAD units,
//! so one `x_tol` means the same thing for every feature. Immutable
//! coordinates are copied from `x` bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSpec};
use crate::distance::{distance_unchecked, WeightVector};
use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::optimizer::{nelder_mead, NmOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfConfig {
    /// Tolerance on `|score(x′) − y′|`.
    pub epsilon: f64,
    pub lambda_init: f64,
    /// Additive λ step.
    pub alpha: f64,
    /// Each step sets `λ ← lambda_growth · λ + alpha`; `1` is a purely
    /// additive schedule.
    pub lambda_growth: f64,
    pub lambda_max: f64,
    pub restarts: usize,
    /// Distance weights; `None` is the plain MAD distance.
    pub theta: Option<WeightVector>,
    /// How far past 0.5 a negative counterfactual aims; `None` means `epsilon`.
    pub margin: Option<f64>,
    pub seed: u64,
    /// Settings for each Nelder-Mead run.
    pub optimizer: NmOptions,
    /// Nelder-Mead runs per λ value. Each run restarts from the previous
    /// optimum; the sequence stops early once a run gains less than `f_tol`.
    pub runs_per_lambda: usize,
}

impl Default for CfConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            lambda_init: 0.0,
            alpha: 0.5,
            lambda_growth: 1.5,
            lambda_max: 1e4,
            restarts: 5,
            theta: None,
            margin: None,
            seed: 0,
            optimizer: NmOptions::default(),
            runs_per_lambda: 5,
        }
    }
}

impl CfConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        if !(self.lambda_init >= 0.0)
            || !(self.alpha > 0.0)
            || !(self.lambda_growth >= 1.0)
            || !(self.lambda_max > self.lambda_init)
        {
            return Err(Error::InvalidArgument(
                "need lambda_init >= 0, alpha > 0, lambda_growth >= 1 and lambda_max > lambda_init"
                    .into(),
            ));
        }
        if self.restarts == 0 || self.runs_per_lambda == 0 {
            return Err(Error::InvalidArgument(
                "restarts and runs_per_lambda must be at least 1".into(),
            ));
        }
        if let Some(m) = self.margin {
            if !(m >= 0.0 && 0.5 + m <= 1.0 - self.epsilon) {
                return Err(Error::InvalidArgument(format!(
                    "margin {m} puts the target out of range"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfMode {
    /// Rejected instance pushed across the boundary.
    Negative,
    /// Accepted instance pulled back to the boundary.
    Positive,
    /// Arbitrary target score.
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub mode: CfMode,
    pub x_original: Vec<f64>,
    pub x_cf: Vec<f64>,
    pub y_original: f64,
    pub y_target: f64,
    pub y_achieved: f64,
    pub epsilon: f64,
    /// Distance under the metric that was optimised (weighted if θ was set).
    pub distance: f64,
    pub lambda_final: f64,
    pub deltas: Vec<f64>,
    pub size: usize,
    pub valid: bool,
    /// Restart that produced this result; `None` for a vacuous result.
    pub restart: Option<usize>,
    /// `(λ, score)` after each optimisation of the selected restart.
    pub trace: Vec<(f64, f64)>,
}

/// Number of features whose change exceeds their threshold.
pub fn changed_features(deltas: &[f64], specs: &[FeatureSpec]) -> usize {
    deltas
        .iter()
        .zip(specs)
        .filter(|(d, s)| d.abs() > s.change_threshold())
        .count()
}

fn checked_score<P: Predictor + ?Sized>(model: &P, x: &[f64]) -> Result<f64> {
    let s = model.score(x);
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::NonFinite(format!("model score {s}")))
    }
}

/// `λ (score(x′) − y′)² + d(x, x′)`, with `d` weighted by θ when given.
pub fn loss<P: Predictor + ?Sized>(
    x: &[f64],
    x_prime: &[f64],
    y_target: f64,
    lambda: f64,
    model: &P,
    specs: &[FeatureSpec],
    theta: Option<&WeightVector>,
) -> Result<f64> {
    for v in [x, x_prime] {
        if v.len() != specs.len() {
            return Err(Error::DimensionMismatch {
                expected: specs.len(),
                actual: v.len(),
            });
        }
    }
    for (j, s) in specs.iter().enumerate() {
        if !s.contains(x[j]) || !s.contains(x_prime[j]) {
            return Err(Error::OutOfBounds {
                feature: s.name.clone(),
            });
        }
    }
    if let Some(t) = theta {
        if t.len() != specs.len() {
            return Err(Error::DimensionMismatch {
                expected: specs.len(),
                actual: t.len(),
            });
        }
    }
    let s = checked_score(model, x_prime)?;
    let d = distance_unchecked(x, x_prime, specs, theta.map(WeightVector::as_slice));
    Ok(lambda * (s - y_target).powi(2) + d)
}

/// One restart's outcome.
struct Attempt {
    x_cf: Vec<f64>,
    score: f64,
    distance: f64,
    lambda: f64,
    trace: Vec<(f64, f64)>,
}

/// Maps between full feature vectors and the reduced, MAD-scaled coordinates
/// the simplex moves in.
struct Space<'a> {
    x: &'a [f64],
    specs: &'a [FeatureSpec],
    free: Vec<usize>,
    bounds: Vec<(f64, f64)>,
}

impl<'a> Space<'a> {
    fn new(x: &'a [f64], specs: &'a [FeatureSpec]) -> Self {
        let free: Vec<usize> = (0..specs.len()).filter(|&j| specs[j].mutable).collect();
        let bounds = free
            .iter()
            .map(|&j| (specs[j].lower / specs[j].mad, specs[j].upper / specs[j].mad))
            .collect();
        Self {
            x,
            specs,
            free,
            bounds,
        }
    }

    fn reduce(&self, full: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&j| full[j] / self.specs[j].mad)
            .collect()
    }

    fn expand_into(&self, u: &[f64], full: &mut [f64]) {
        full.copy_from_slice(self.x);
        for (k, &j) in self.free.iter().enumerate() {
            let s = &self.specs[j];
            full[j] = (u[k] * s.mad).clamp(s.lower, s.upper);
        }
    }

    fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.x.len()];
        self.expand_into(u, &mut full);
        full
    }
}

fn run_restart<P: Predictor + ?Sized>(
    space: &Space,
    start: Vec<f64>,
    y_target: f64,
    model: &P,
    cfg: &CfConfig,
) -> Result<Attempt> {
    let theta = cfg.theta.as_ref().map(WeightVector::as_slice);
    let steps = vec![1.0; space.free.len()];
    let mut current = space.reduce(&start);
    // reduce/expand can drift by an ulp; keep the start inside the box
    for (u, &(lo, hi)) in current.iter_mut().zip(&space.bounds) {
        *u = u.clamp(lo, hi);
    }
    let origin = current.clone();
    let mut lambda = cfg.lambda_init;
    let mut trace = Vec::new();
    let mut scratch = vec![0.0; space.x.len()];
    loop {
        let mut objective = |u: &[f64]| {
            space.expand_into(u, &mut scratch);
            let s = model.score(&scratch);
            lambda * (s - y_target).powi(2)
                + distance_unchecked(space.x, &scratch, space.specs, theta)
        };
        // Once λ is large the start record can beat an optimum stuck on a
        // flat stretch of the score (e.g. near x on a saturated model).
        if objective(&origin) < objective(&current) {
            current.clone_from(&origin);
        }
        let mut previous = f64::INFINITY;
        for _ in 0..cfg.runs_per_lambda {
            let result = nelder_mead(
                &mut objective,
                &current,
                &space.bounds,
                &steps,
                &[],
                &cfg.optimizer,
            )?;
            current = result.x_opt;
            if previous - result.f_opt <= cfg.optimizer.f_tol {
                break;
            }
            previous = result.f_opt;
        }
        let x_cf = space.expand(&current);
        let score = checked_score(model, &x_cf)?;
        trace.push((lambda, score));
        let next = cfg.lambda_growth * lambda + cfg.alpha;
        let done = (score - y_target).abs() <= cfg.epsilon || next > cfg.lambda_max;
        if done {
            let distance = distance_unchecked(space.x, &x_cf, space.specs, theta);
            return Ok(Attempt {
                x_cf,
                score,
                distance,
                lambda,
                trace,
            });
        }
        lambda = next;
    }
}

fn generate_mode<P: Predictor + ?Sized>(
    x: &[f64],
    y_target: f64,
    mode: CfMode,
    start_class: u8,
    model: &P,
    data: &Dataset,
    cfg: &CfConfig,
) -> Result<CounterfactualResult> {
    cfg.validate()?;
    data.check_instance(x)?;
    let specs = data.specs();
    if !(y_target >= cfg.epsilon && y_target <= 1.0 - cfg.epsilon) {
        return Err(Error::InvalidArgument(format!(
            "target {y_target} outside [epsilon, 1 - epsilon]"
        )));
    }
    if let Some(t) = &cfg.theta {
        if t.len() != specs.len() {
            return Err(Error::DimensionMismatch {
                expected: specs.len(),
                actual: t.len(),
            });
        }
    }
    let space = Space::new(x, specs);
    if space.free.is_empty() {
        return Err(Error::NothingToOptimize(
            "every feature is immutable".into(),
        ));
    }
    let y_original = checked_score(model, x)?;
    let finish = |x_cf: Vec<f64>, y_achieved: f64, distance: f64, lambda: f64, restart, trace| {
        let deltas: Vec<f64> = x_cf.iter().zip(x).map(|(a, b)| a - b).collect();
        CounterfactualResult {
            mode,
            x_original: x.to_vec(),
            size: changed_features(&deltas, specs),
            deltas,
            x_cf,
            y_original,
            y_target,
            y_achieved,
            epsilon: cfg.epsilon,
            distance,
            lambda_final: lambda,
            valid: (y_achieved - y_target).abs() <= cfg.epsilon,
            restart,
            trace,
        }
    };
    if (y_original - y_target).abs() <= cfg.epsilon {
        return Ok(finish(
            x.to_vec(),
            y_original,
            0.0,
            cfg.lambda_init,
            None,
            Vec::new(),
        ));
    }

    let pool: Vec<usize> = (0..data.n_rows())
        .filter(|&i| data.targets()[i] == start_class)
        .collect();
    if pool.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "no training records of class {start_class}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Attempt)> = None;
    for r in 0..cfg.restarts {
        let row = data.row(pool[rng.gen_range(0..pool.len())]);
        let start: Vec<f64> = (0..x.len())
            .map(|j| if specs[j].mutable { row[j] } else { x[j] })
            .collect();
        let attempt = run_restart(&space, start, y_target, model, cfg)?;
        let better = match &best {
            None => true,
            Some((_, b)) => {
                let valid = (attempt.score - y_target).abs() <= cfg.epsilon;
                let b_valid = (b.score - y_target).abs() <= cfg.epsilon;
                match (valid, b_valid) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => attempt.distance < b.distance,
                    (false, false) => (attempt.score - y_target).abs() < (b.score - y_target).abs(),
                }
            }
        };
        if better {
            best = Some((r, attempt));
        }
    }
    let (r, a) = best.expect("at least one restart");
    Ok(finish(
        a.x_cf,
        a.score,
        a.distance,
        a.lambda,
        Some(r),
        a.trace,
    ))
}

/// Closest `x′` (under the configured distance) with `|score(x′) − y_target| ≤ ε`.
///
/// Restarts begin at training records of class `round(y_target)`, or of the
/// class opposite to `x` when the target is exactly 0.5.
pub fn generate<P: Predictor + ?Sized>(
    x: &[f64],
    y_target: f64,
    model: &P,
    data: &Dataset,
    cfg: &CfConfig,
) -> Result<CounterfactualResult> {
    let start_class = if y_target == 0.5 {
        1 - model.classify(x)
    } else {
        u8::from(y_target > 0.5)
    };
    generate_mode(x, y_target, CfMode::Target, start_class, model, data, cfg)
}

/// Smallest change that gets a rejected `x` accepted, aiming at `0.5 + margin`.
pub fn generate_negative<P: Predictor + ?Sized>(
    x: &[f64],
    model: &P,
    data: &Dataset,
    cfg: &CfConfig,
) -> Result<CounterfactualResult> {
    if model.classify(x) == 1 {
        return Err(Error::Precondition(
            "negative counterfactuals need a rejected instance".into(),
        ));
    }
    let target = 0.5 + cfg.margin.unwrap_or(cfg.epsilon);
    generate_mode(x, target, CfMode::Negative, 1, model, data, cfg)
}

/// Nearest point on the decision boundary for an accepted `x`: how far it
/// could drift before approval is at risk.
pub fn generate_positive<P: Predictor + ?Sized>(
    x: &[f64],
    model: &P,
    data: &Dataset,
    cfg: &CfConfig,
) -> Result<CounterfactualResult> {
    if model.classify(x) == 0 {
        return Err(Error::Precondition(
            "positive counterfactuals need an accepted instance".into(),
        ));
    }
    generate_mode(x, 0.5, CfMode::Positive, 0, model, data, cfg)
}
