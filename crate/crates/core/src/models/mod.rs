//! Black-box classifiers.
//!
//! Everything downstream sees a model only through [`Predictor`]: a
//! deterministic map from a feature vector (in original units) to `P(y = 1)`.
//! The reference models below each own a [`Scaler`] fitted on their training
//! data, so callers never standardise anything themselves.

mod cv;
mod gradboost;
mod logreg;
mod mlp;
mod svc;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub use cv::{
    accuracy, cross_validate, f1_score, grid_search, stratified_folds, TrainReport, Trainer,
};
pub use gradboost::{GradBoost, GradBoostConfig, GradBoostLoss, RegressionTree, TreeNode};
pub use logreg::{LogReg, LogRegConfig};
pub use mlp::{Mlp, MlpConfig};
pub use svc::{LinearSvc, LinearSvcConfig};

/// Opaque scoring interface.
pub trait Predictor: Send + Sync {
    /// `P(y = 1 | x)`, in `[0, 1]`.
    fn score(&self, x: &[f64]) -> f64;

    fn classify(&self, x: &[f64]) -> u8 {
        u8::from(self.score(x) >= 0.5)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn score(&self, x: &[f64]) -> f64 {
        (**self).score(x)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn score(&self, x: &[f64]) -> f64 {
        (**self).score(x)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-feature standardisation fitted on training data. Zero-variance
/// features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(data: &Dataset) -> Self {
        let n = data.n_rows() as f64;
        let p = data.n_features();
        let mut mean = vec![0.0; p];
        for row in data.records() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in data.records() {
            for j in 0..p {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    #[inline]
    pub fn scale(&self, j: usize, v: f64) -> f64 {
        (v - self.mean[j]) / self.std[j]
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| self.scale(j, v))
            .collect()
    }

    pub fn transform_all(&self, data: &Dataset) -> Vec<Vec<f64>> {
        data.records().iter().map(|r| self.transform(r)).collect()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }
}

/// Balanced class weights `n / (2 n_c)`, or all ones.
pub(crate) fn sample_weights(targets: &[u8], balanced: bool) -> Vec<f64> {
    if !balanced {
        return vec![1.0; targets.len()];
    }
    let n = targets.len() as f64;
    let positives = targets.iter().filter(|&&t| t == 1).count() as f64;
    let counts = [n - positives, positives];
    targets
        .iter()
        .map(|&t| n / (2.0 * counts[t as usize]))
        .collect()
}

/// Any trained reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    LogReg(LogReg),
    Mlp(Mlp),
    GradBoost(GradBoost),
    LinearSvc(LinearSvc),
}

impl Model {
    pub fn family(&self) -> &'static str {
        match self {
            Model::LogReg(_) => "logreg",
            Model::Mlp(_) => "mlp",
            Model::GradBoost(_) => "gradboost",
            Model::LinearSvc(_) => "svc",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::LogReg(m) => m.scaler.n_features(),
            Model::Mlp(m) => m.scaler.n_features(),
            Model::GradBoost(m) => m.scaler.n_features(),
            Model::LinearSvc(m) => m.scaler.n_features(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        Ok(doc.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

impl Predictor for Model {
    fn score(&self, x: &[f64]) -> f64 {
        match self {
            Model::LogReg(m) => m.score(x),
            Model::Mlp(m) => m.score(x),
            Model::GradBoost(m) => m.score(x),
            Model::LinearSvc(m) => m.score(x),
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned on-disk form of a [`Model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub model: Model,
}

/// Training configuration for any model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TrainConfig {
    LogReg(LogRegConfig),
    Mlp(MlpConfig),
    GradBoost(GradBoostConfig),
    LinearSvc(LinearSvcConfig),
}

impl TrainConfig {
    pub fn family(&self) -> &'static str {
        match self {
            TrainConfig::LogReg(_) => "logreg",
            TrainConfig::Mlp(_) => "mlp",
            TrainConfig::GradBoost(_) => "gradboost",
            TrainConfig::LinearSvc(_) => "svc",
        }
    }

    /// Defaults for a family name as used on the command line.
    pub fn default_for(family: &str) -> Result<Self> {
        Ok(match family {
            "logreg" => TrainConfig::LogReg(LogRegConfig::default()),
            "mlp" => TrainConfig::Mlp(MlpConfig::default()),
            "gradboost" => TrainConfig::GradBoost(GradBoostConfig::default()),
            "svc" => TrainConfig::LinearSvc(LinearSvcConfig::default()),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown model family {other:?} (expected logreg, mlp, gradboost or svc)"
                )))
            }
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            TrainConfig::LogReg(c) => c.seed = seed,
            TrainConfig::Mlp(c) => c.seed = seed,
            TrainConfig::GradBoost(c) => c.seed = seed,
            TrainConfig::LinearSvc(c) => c.seed = seed,
        }
        self
    }

    pub fn fit(&self, data: &Dataset) -> Result<Model> {
        Ok(match self {
            TrainConfig::LogReg(c) => Model::LogReg(logreg::train_logreg(data, c)?),
            TrainConfig::Mlp(c) => Model::Mlp(mlp::train_mlp(data, c)?),
            TrainConfig::GradBoost(c) => Model::GradBoost(gradboost::train_gradboost(data, c)?),
            TrainConfig::LinearSvc(c) => Model::LinearSvc(svc::train_linear_svc(data, c)?),
        })
    }
}

impl Trainer for TrainConfig {
    type Output = Model;

    fn fit(&self, data: &Dataset) -> Result<Model> {
        TrainConfig::fit(self, data)
    }

    fn hyperparams(&self) -> BTreeMap<String, serde_json::Value> {
        match serde_json::to_value(self) {
            Ok(serde_json::Value::Object(map)) => map.into_iter().collect(),
            _ => BTreeMap::new(),
        }
    }
}

pub use gradboost::train_gradboost;
pub use logreg::train_logreg;
pub use mlp::train_mlp;
pub use svc::train_linear_svc;
