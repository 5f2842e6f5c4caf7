//! Experiment harness: cross-validated predictive power per model family and
//! counterfactual size per (model, weighting strategy).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSpec};
use crate::distance::WeightVector;
use crate::error::{Error, Result};
use crate::generator::{
    changed_features, generate_negative, generate_positive, CfConfig, CounterfactualResult,
};
use crate::models::{
    grid_search, GradBoostConfig, LinearSvcConfig, LogRegConfig, MlpConfig, Predictor, TrainConfig,
};
use crate::weights::{global_theta, knn_theta, DEFAULT_K};

/// Features whose change exceeds their change threshold.
pub fn counterfactual_size(result: &CounterfactualResult, specs: &[FeatureSpec]) -> usize {
    changed_features(&result.deltas, specs)
}

/// How distance weights are chosen for a counterfactual search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Plain MAD distance.
    Baseline,
    /// Global θ from ANOVA F-values.
    Importance,
    /// Local θ from the nearest records on the other side of the boundary.
    Knn,
    /// All-ones θ; must reproduce the baseline exactly.
    Uniform,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Baseline,
        Strategy::Importance,
        Strategy::Knn,
        Strategy::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Importance => "importance",
            Strategy::Knn => "knn",
            Strategy::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown strategy {s:?} (expected baseline, importance, knn or uniform)"
                ))
            })
    }
}

/// One (model, strategy) cell of the size table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub model: String,
    pub strategy: Strategy,
    /// Mean over valid counterfactuals; absent when none was valid.
    pub mean_size: Option<f64>,
    /// Population standard deviation over valid counterfactuals.
    pub std_size: Option<f64>,
    /// Instances attempted.
    pub n_instances: usize,
    pub n_valid: usize,
    pub validity_rate: f64,
    /// Instances whose generation returned an error.
    pub n_errors: usize,
    /// First error message, if any; a strategy that cannot be set up at all
    /// fails every instance with this message.
    pub error: Option<String>,
    /// Per-instance sizes in instance order (`None` for invalid or failed).
    pub sizes: Vec<Option<usize>>,
}

/// Which instances the size benchmark explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// Rejected rows, explained by negative counterfactuals.
    #[default]
    Rejected,
    /// Accepted rows, explained by positive counterfactuals.
    Accepted,
}

impl Population {
    /// Class the model assigns to the instances.
    pub fn class(self) -> u8 {
        match self {
            Population::Rejected => 0,
            Population::Accepted => 1,
        }
    }
}

impl FromStr for Population {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rejected" => Ok(Population::Rejected),
            "accepted" => Ok(Population::Accepted),
            other => Err(Error::InvalidArgument(format!(
                "unknown population {other:?} (expected rejected or accepted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeBenchConfig {
    pub n_instances: usize,
    pub population: Population,
    /// Neighbours for the KNN strategy.
    pub knn_k: usize,
    /// Counterfactual settings; instance `i` uses seed `cf.seed + i`.
    pub cf: CfConfig,
}

impl Default for SizeBenchConfig {
    fn default() -> Self {
        Self {
            n_instances: 200,
            population: Population::Rejected,
            knn_k: DEFAULT_K,
            cf: CfConfig::default(),
        }
    }
}

/// The first `n` rows (in dataset order) that `model` assigns to `class`.
pub fn instances_of_class<P: Predictor + ?Sized>(
    data: &Dataset,
    model: &P,
    class: u8,
    n: usize,
) -> Vec<usize> {
    (0..data.n_rows())
        .filter(|&i| model.classify(data.row(i)) == class)
        .take(n)
        .collect()
}

fn theta_for(
    strategy: Strategy,
    data: &Dataset,
    x: &[f64],
    population: Population,
    k: usize,
    global: &Option<std::result::Result<WeightVector, String>>,
) -> Result<Option<WeightVector>> {
    Ok(match strategy {
        Strategy::Baseline => None,
        Strategy::Uniform => Some(WeightVector::uniform(data.specs())?),
        Strategy::Importance => match global {
            Some(Ok(t)) => Some(t.clone()),
            Some(Err(e)) => return Err(Error::InvalidWeights(e.clone())),
            None => unreachable!("global θ is computed whenever importance is requested"),
        },
        // neighbours are taken from the class on the far side of the boundary
        Strategy::Knn => Some(knn_theta(data, x, 1 - population.class(), k)?),
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Counterfactuals for up to `cfg.n_instances` rows of the chosen population
/// per model, under each strategy. Instances run in parallel; results are
/// gathered in instance order, so reports are identical across runs.
pub fn run_size_benchmark(
    data: &Dataset,
    models: &[(&str, &dyn Predictor)],
    strategies: &[Strategy],
    cfg: &SizeBenchConfig,
) -> Vec<SizeReport> {
    let global = strategies
        .contains(&Strategy::Importance)
        .then(|| global_theta(data).map_err(|e| e.to_string()));
    let mut reports = Vec::new();
    for &(name, model) in models {
        let rows = instances_of_class(data, model, cfg.population.class(), cfg.n_instances);
        for &strategy in strategies {
            let outcomes: Vec<std::result::Result<CounterfactualResult, String>> = rows
                .par_iter()
                .map(|&i| {
                    let x = data.row(i);
                    let theta = theta_for(strategy, data, x, cfg.population, cfg.knn_k, &global)?;
                    let cf = CfConfig {
                        theta,
                        seed: cfg.cf.seed.wrapping_add(i as u64),
                        ..cfg.cf.clone()
                    };
                    match cfg.population {
                        Population::Rejected => generate_negative(x, model, data, &cf),
                        Population::Accepted => generate_positive(x, model, data, &cf),
                    }
                })
                .map(|r| r.map_err(|e| e.to_string()))
                .collect();
            reports.push(summarise(name, strategy, data.specs(), &outcomes));
        }
    }
    reports
}

fn summarise(
    model: &str,
    strategy: Strategy,
    specs: &[FeatureSpec],
    outcomes: &[std::result::Result<CounterfactualResult, String>],
) -> SizeReport {
    let sizes: Vec<Option<usize>> = outcomes
        .iter()
        .map(|o| match o {
            Ok(r) if r.valid => Some(counterfactual_size(r, specs)),
            _ => None,
        })
        .collect();
    let valid: Vec<f64> = sizes.iter().flatten().map(|&s| s as f64).collect();
    let n = outcomes.len();
    let (mean_size, std_size) = if valid.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&valid);
        (Some(m), Some(s))
    };
    SizeReport {
        model: model.to_string(),
        strategy,
        mean_size,
        std_size,
        n_instances: n,
        n_valid: valid.len(),
        validity_rate: if n == 0 {
            0.0
        } else {
            valid.len() as f64 / n as f64
        },
        n_errors: outcomes.iter().filter(|o| o.is_err()).count(),
        error: outcomes.iter().find_map(|o| o.as_ref().err().cloned()),
        sizes,
    }
}

/// Per-model size reduction of `strategy` against the baseline, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub strategy: Strategy,
    pub per_model: BTreeMap<String, f64>,
    pub average: f64,
}

/// `(baseline mean − strategy mean) / baseline mean` for every model that has
/// a `strategy` report, and the plain average across those models.
pub fn relative_improvement(reports: &[SizeReport], strategy: Strategy) -> Result<Improvement> {
    let mut per_model = BTreeMap::new();
    for r in reports.iter().filter(|r| r.strategy == strategy) {
        let base = reports
            .iter()
            .find(|b| b.model == r.model && b.strategy == Strategy::Baseline)
            .ok_or_else(|| Error::MissingBaseline(r.model.clone()))?;
        let (Some(b), Some(s)) = (base.mean_size, r.mean_size) else {
            return Err(Error::MissingBaseline(format!(
                "{} has no valid counterfactuals to compare",
                r.model
            )));
        };
        let gain = if b == 0.0 { 0.0 } else { (b - s) / b };
        per_model.insert(r.model.clone(), gain);
    }
    if per_model.is_empty() {
        return Err(Error::MissingBaseline(format!("no {strategy} reports")));
    }
    let average = per_model.values().sum::<f64>() / per_model.len() as f64;
    Ok(Improvement {
        strategy,
        per_model,
        average,
    })
}

/// One row of the predictive-power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub model: String,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1_std: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub folds: usize,
    pub best: Option<TrainConfig>,
    pub error: Option<String>,
}

/// Small per-family grids; every entry carries `seed`.
pub fn default_grids(seed: u64) -> Vec<(String, Vec<TrainConfig>)> {
    let logreg = [1e-4, 1e-2, 1.0].map(|l2| {
        TrainConfig::LogReg(LogRegConfig {
            l2,
            ..LogRegConfig::default()
        })
    });
    let mlp = [0.01, 0.05].map(|learning_rate| {
        TrainConfig::Mlp(MlpConfig {
            learning_rate,
            ..MlpConfig::default()
        })
    });
    let gradboost = [(50, 2), (100, 2), (100, 3)].map(|(trees, depth)| {
        TrainConfig::GradBoost(GradBoostConfig {
            trees,
            depth,
            ..GradBoostConfig::default()
        })
    });
    let svc = [1e-3, 1e-2, 1e-1].map(|c| {
        TrainConfig::LinearSvc(LinearSvcConfig {
            c,
            ..LinearSvcConfig::default()
        })
    });
    [
        ("logreg", logreg.to_vec()),
        ("mlp", mlp.to_vec()),
        ("gradboost", gradboost.to_vec()),
        ("svc", svc.to_vec()),
    ]
    .into_iter()
    .map(|(name, grid)| {
        (
            name.to_string(),
            grid.into_iter().map(|c| c.with_seed(seed)).collect(),
        )
    })
    .collect()
}

/// Grid-searches every family with `k`-fold CV. A family that fails is
/// reported with its error instead of aborting the table.
pub fn run_power_benchmark(
    data: &Dataset,
    grids: &[(String, Vec<TrainConfig>)],
    k: usize,
    seed: u64,
) -> Result<Vec<PowerRow>> {
    if grids.is_empty() {
        return Err(Error::InvalidArgument("no model grids given".into()));
    }
    Ok(grids
        .iter()
        .map(|(name, grid)| match grid_search(data, grid, k, seed) {
            Ok((best, report)) => PowerRow {
                model: name.clone(),
                f1: Some(report.f1),
                accuracy: Some(report.accuracy),
                f1_std: Some(report.f1_std),
                accuracy_std: Some(report.accuracy_std),
                folds: report.folds,
                best: Some(best),
                error: None,
            },
            Err(e) => PowerRow {
                model: name.clone(),
                f1: None,
                accuracy: None,
                f1_std: None,
                accuracy_std: None,
                folds: k,
                best: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// Everything the `benchmark` command runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkPlan {
    /// Model families, in output order.
    pub models: Vec<String>,
    pub strategies: Vec<Strategy>,
    /// Cross-validate and grid-search before the size runs. When off (or when
    /// a family's search fails) the family is trained once with the first
    /// entry of its configured grid, or with its defaults.
    pub power: bool,
    pub folds: usize,
    pub seed: u64,
    /// Per-family grids; families missing here use [`default_grids`].
    pub grids: BTreeMap<String, Vec<TrainConfig>>,
    pub size: SizeBenchConfig,
}

impl Default for BenchmarkPlan {
    fn default() -> Self {
        Self {
            models: ["logreg", "mlp", "gradboost", "svc"]
                .map(String::from)
                .to_vec(),
            strategies: vec![Strategy::Baseline, Strategy::Importance, Strategy::Knn],
            power: true,
            folds: 5,
            seed: 0,
            grids: BTreeMap::new(),
            size: SizeBenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub features: usize,
    pub positives: usize,
}

/// A pass/fail statement about a finished benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub dataset: DatasetSummary,
    pub plan: BenchmarkPlan,
    pub power: Vec<PowerRow>,
    /// Configuration each family was finally trained with.
    pub trained: BTreeMap<String, TrainConfig>,
    pub size: Vec<SizeReport>,
    pub improvements: Vec<Improvement>,
    pub checks: Vec<Check>,
}

impl BenchmarkReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Tables and check lines for a terminal.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "dataset: {} rows, {} features, {} positive\n\n",
            self.dataset.rows, self.dataset.features, self.dataset.positives
        );
        if !self.power.is_empty() {
            out.push_str("Predictive power (cross-validated)\n");
            out.push_str(&format_power_table(&self.power));
            out.push('\n');
        }
        out.push_str("Counterfactual size (mean±std, valid/attempted)\n");
        out.push_str(&format_size_table(&self.size));
        for imp in &self.improvements {
            out.push_str(&format!(
                "{} vs baseline: {:.1}% smaller on average (",
                imp.strategy,
                100.0 * imp.average
            ));
            let parts: Vec<String> = imp
                .per_model
                .iter()
                .map(|(m, v)| format!("{m} {:.1}%", 100.0 * v))
                .collect();
            out.push_str(&parts.join(", "));
            out.push_str(")\n");
        }
        if !self.checks.is_empty() {
            out.push('\n');
            for c in &self.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                out.push_str(&format!("{tag} {}: {}\n", c.name, c.detail));
            }
        }
        out
    }
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn cell<'a>(reports: &'a [SizeReport], model: &str, strategy: Strategy) -> Option<&'a SizeReport> {
    reports
        .iter()
        .find(|r| r.model == model && r.strategy == strategy)
}

/// Checks derived from the report itself: cell ranges, the all-ones
/// reduction, the size ordering of the weighted strategies, validity of the
/// logistic baseline and error-free training.
pub fn evaluate_checks(
    p: usize,
    power: &[PowerRow],
    reports: &[SizeReport],
    models: &[String],
) -> Vec<Check> {
    let mut checks = Vec::new();
    for row in power {
        checks.push(check(
            format!("power/{}", row.model),
            row.error.is_none(),
            row.error.clone().unwrap_or_else(|| "trained".into()),
        ));
    }
    let in_range = reports.iter().all(|r| {
        (0.0..=1.0).contains(&r.validity_rate)
            && r.mean_size.is_none_or(|m| (0.0..=p as f64).contains(&m))
    });
    checks.push(check(
        "cell_ranges",
        in_range,
        format!("0 <= mean <= {p} and validity in [0, 1]"),
    ));
    for m in models {
        let base = cell(reports, m, Strategy::Baseline);
        if let Some(b) = base {
            checks.push(check(
                format!("errors/{m}"),
                reports
                    .iter()
                    .filter(|r| &r.model == m)
                    .all(|r| r.n_errors == 0 && r.error.is_none()),
                b.error
                    .clone()
                    .unwrap_or_else(|| "no generation errors".into()),
            ));
        }
        if let (Some(b), Some(u)) = (base, cell(reports, m, Strategy::Uniform)) {
            checks.push(check(
                format!("uniform_equals_baseline/{m}"),
                b.sizes == u.sizes && b.mean_size == u.mean_size,
                format!("{} instances compared", b.n_instances),
            ));
        }
        let base_mean = base.and_then(|b| b.mean_size);
        for (strategy, slack) in [(Strategy::Importance, 1.0), (Strategy::Knn, 1.05)] {
            if let (Some(bm), Some(c)) = (base_mean, cell(reports, m, strategy)) {
                let passed = c.mean_size.is_some_and(|sm| sm <= slack * bm);
                checks.push(check(
                    format!("{strategy}_size/{m}"),
                    passed,
                    format!(
                        "mean {} vs {slack:.2} x baseline {bm:.3}",
                        c.mean_size.map_or("n/a".into(), |v| format!("{v:.3}"))
                    ),
                ));
            }
        }
        if m == "logreg" {
            if let Some(b) = base {
                checks.push(check(
                    "validity/logreg",
                    b.validity_rate >= 0.95,
                    format!("{}/{} valid", b.n_valid, b.n_instances),
                ));
            }
        }
    }
    checks
}

/// Grid search (optional), training, size runs, improvements and checks.
pub fn run_benchmark(data: &Dataset, plan: &BenchmarkPlan) -> Result<BenchmarkReport> {
    if plan.models.is_empty() || plan.strategies.is_empty() {
        return Err(Error::InvalidArgument(
            "benchmark needs at least one model and one strategy".into(),
        ));
    }
    let defaults = default_grids(plan.seed);
    let mut grids = Vec::new();
    for m in &plan.models {
        let grid = match plan.grids.get(m) {
            Some(g) if g.is_empty() => {
                return Err(Error::InvalidArgument(format!("empty grid for {m}")));
            }
            Some(g) => g.iter().map(|c| c.clone().with_seed(plan.seed)).collect(),
            None => match defaults.iter().find(|(name, _)| name == m) {
                Some((_, g)) => g.clone(),
                None => vec![TrainConfig::default_for(m)?.with_seed(plan.seed)],
            },
        };
        grids.push((m.clone(), grid));
    }
    let power = if plan.power {
        run_power_benchmark(data, &grids, plan.folds, plan.seed)?
    } else {
        Vec::new()
    };

    let mut trained = BTreeMap::new();
    let mut fitted = Vec::new();
    let mut size = Vec::new();
    for (name, grid) in &grids {
        let best = power
            .iter()
            .find(|r| &r.model == name)
            .and_then(|r| r.best.clone());
        let cfg = match (best, plan.grids.contains_key(name)) {
            (Some(best), _) => best,
            (None, true) => grid[0].clone(),
            (None, false) => TrainConfig::default_for(name)?.with_seed(plan.seed),
        };
        match cfg.fit(data) {
            Ok(model) => {
                trained.insert(name.clone(), cfg);
                fitted.push((name.clone(), model));
            }
            Err(e) => {
                for &strategy in &plan.strategies {
                    size.push(summarise(name, strategy, data.specs(), &[]));
                    size.last_mut().expect("just pushed").error = Some(e.to_string());
                }
            }
        }
    }
    let models: Vec<(&str, &dyn Predictor)> = fitted
        .iter()
        .map(|(n, m)| (n.as_str(), m as &dyn Predictor))
        .collect();
    size.extend(run_size_benchmark(
        data,
        &models,
        &plan.strategies,
        &plan.size,
    ));
    let order = |r: &SizeReport| {
        (
            plan.models.iter().position(|m| m == &r.model),
            plan.strategies.iter().position(|s| *s == r.strategy),
        )
    };
    size.sort_by_key(order);

    let improvements = plan
        .strategies
        .iter()
        .filter(|&&s| s != Strategy::Baseline)
        .filter_map(|&s| relative_improvement(&size, s).ok())
        .collect();
    let checks = evaluate_checks(data.n_features(), &power, &size, &plan.models);
    Ok(BenchmarkReport {
        dataset: DatasetSummary {
            rows: data.n_rows(),
            features: data.n_features(),
            positives: data.count_class(1),
        },
        plan: plan.clone(),
        power,
        trained,
        size,
        improvements,
        checks,
    })
}

fn opt(v: Option<f64>, width: usize, decimals: usize) -> String {
    match v {
        Some(v) => format!("{v:>width$.decimals$}"),
        None => format!("{:>width$}", "n/a"),
    }
}

/// Plain-text F1/accuracy table.
pub fn format_power_table(rows: &[PowerRow]) -> String {
    let mut out = format!("{:<10} {:>6} {:>6}\n", "Model", "F1", "Acc");
    for r in rows {
        out.push_str(&format!(
            "{:<10} {} {}",
            r.model,
            opt(r.f1, 6, 2),
            opt(r.accuracy, 6, 2)
        ));
        if let Some(e) = &r.error {
            out.push_str(&format!("  error: {e}"));
        }
        out.push('\n');
    }
    out
}

/// Plain-text size table: one row per model, `mean±std` per strategy.
pub fn format_size_table(reports: &[SizeReport]) -> String {
    let mut strategies: Vec<Strategy> = reports.iter().map(|r| r.strategy).collect();
    strategies.sort();
    strategies.dedup();
    let mut models: Vec<&str> = Vec::new();
    for r in reports {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut out = format!("{:<10}", "Model");
    for s in &strategies {
        out.push_str(&format!(" {:>22}", s.name()));
    }
    out.push('\n');
    for m in models {
        out.push_str(&format!("{m:<10}"));
        for s in &strategies {
            let cell = reports
                .iter()
                .find(|r| r.model == m && r.strategy == *s)
                .map(|r| match (r.mean_size, r.std_size) {
                    (Some(mu), Some(sd)) => {
                        format!("{mu:.2}±{sd:.2} ({}/{})", r.n_valid, r.n_instances)
                    }
                    _ => format!("n/a ({}/{})", r.n_valid, r.n_instances),
                })
                .unwrap_or_default();
            out.push_str(&format!(" {cell:>22}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::generator::CfMode;

    fn report(model: &str, strategy: Strategy, mean: f64) -> SizeReport {
        SizeReport {
            model: model.into(),
            strategy,
            mean_size: Some(mean),
            std_size: Some(0.0),
            n_instances: 1,
            n_valid: 1,
            validity_rate: 1.0,
            n_errors: 0,
            error: None,
            sizes: vec![Some(1)],
        }
    }

    fn fake_result(x: Vec<f64>, x_cf: Vec<f64>) -> CounterfactualResult {
        let deltas = x_cf.iter().zip(&x).map(|(a, b)| a - b).collect();
        CounterfactualResult {
            mode: CfMode::Negative,
            x_original: x,
            x_cf,
            y_original: 0.2,
            y_target: 0.55,
            y_achieved: 0.55,
            epsilon: 0.05,
            distance: 0.0,
            lambda_final: 0.0,
            deltas,
            size: 0,
            valid: true,
            restart: None,
            trace: Vec::new(),
        }
    }

    #[test]
    fn size_threshold_examples() {
        let data = gen_synthetic(100, 3, 1).unwrap();
        let specs = data.specs();
        let x = data.row(0).to_vec();
        assert_eq!(
            counterfactual_size(&fake_result(x.clone(), x.clone()), specs),
            0
        );
        let mut one = x.clone();
        one[1] += 0.5 * specs[1].mad;
        assert_eq!(counterfactual_size(&fake_result(x.clone(), one), specs), 1);
        let mut mixed = x.clone();
        mixed[0] += 2.0 * specs[0].mad;
        mixed[2] += 1e-6 * specs[2].mad;
        assert_eq!(counterfactual_size(&fake_result(x, mixed), specs), 1);
    }

    #[test]
    fn reported_sizes_give_expected_improvements() {
        let table = [
            ("logreg", 4.86, 3.95),
            ("mlp", 8.88, 8.34),
            ("gradboost", 1.5, 1.49),
            ("svc", 2.5, 2.01),
        ];
        let reports: Vec<SizeReport> = table
            .iter()
            .flat_map(|&(m, b, i)| {
                [
                    report(m, Strategy::Baseline, b),
                    report(m, Strategy::Importance, i),
                ]
            })
            .collect();
        let imp = relative_improvement(&reports, Strategy::Importance).unwrap();
        assert!((imp.per_model["logreg"] - 0.187).abs() < 5e-4);
        assert!((imp.average - 0.112).abs() < 1e-3, "{}", imp.average);

        let same = [
            report("m", Strategy::Baseline, 3.0),
            report("m", Strategy::Knn, 3.0),
        ];
        assert_eq!(
            relative_improvement(&same, Strategy::Knn).unwrap().average,
            0.0
        );
        let orphan = [report("m", Strategy::Knn, 3.0)];
        assert!(matches!(
            relative_improvement(&orphan, Strategy::Knn),
            Err(Error::MissingBaseline(_))
        ));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn uniform_cell_equals_baseline_and_bounds_hold() {
        let data = gen_synthetic(300, 5, 77).unwrap();
        let model = TrainConfig::LogReg(LogRegConfig::default())
            .fit(&data)
            .unwrap();
        let cfg = SizeBenchConfig {
            n_instances: 6,
            cf: CfConfig {
                restarts: 2,
                ..CfConfig::default()
            },
            ..SizeBenchConfig::default()
        };
        let models: [(&str, &dyn Predictor); 1] = [("logreg", &model)];
        let reports = run_size_benchmark(&data, &models, &Strategy::ALL, &cfg);
        assert_eq!(reports.len(), 4);
        let base = &reports[0];
        let uniform = &reports[3];
        assert_eq!(uniform.strategy, Strategy::Uniform);
        assert_eq!(
            (&base.sizes, base.mean_size, base.std_size),
            (&uniform.sizes, uniform.mean_size, uniform.std_size)
        );
        for r in &reports {
            assert!((0.0..=1.0).contains(&r.validity_rate));
            if let Some(m) = r.mean_size {
                assert!((0.0..=5.0).contains(&m));
            }
        }
        assert_eq!(
            reports,
            run_size_benchmark(&data, &models, &Strategy::ALL, &cfg)
        );
        let text = format_size_table(&reports);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn small_benchmark_end_to_end() {
        let data = gen_synthetic(300, 5, 13).unwrap();
        let plan = BenchmarkPlan {
            models: vec!["logreg".into()],
            strategies: Strategy::ALL.to_vec(),
            folds: 3,
            seed: 4,
            size: SizeBenchConfig {
                n_instances: 3,
                ..SizeBenchConfig::default()
            },
            ..BenchmarkPlan::default()
        };
        let report = run_benchmark(&data, &plan).unwrap();
        assert_eq!(report.power.len(), 1);
        assert_eq!(report.size.len(), 4);
        let order: Vec<Strategy> = report.size.iter().map(|r| r.strategy).collect();
        assert_eq!(order, Strategy::ALL.to_vec());
        assert_eq!(report.improvements.len(), 3);
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "uniform_equals_baseline/logreg" && c.passed));
        let json = report.to_json().unwrap();
        let back: BenchmarkReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(
            json,
            run_benchmark(&data, &plan).unwrap().to_json().unwrap()
        );
        assert!(report.to_text().contains("Counterfactual size"));

        let without_power = BenchmarkPlan {
            power: false,
            ..plan.clone()
        };
        let report = run_benchmark(&data, &without_power).unwrap();
        assert!(report.power.is_empty());
        assert_eq!(
            report.trained["logreg"],
            TrainConfig::default_for("logreg").unwrap().with_seed(4)
        );

        let bad = BenchmarkPlan {
            models: vec!["forest".into()],
            ..plan
        };
        assert!(run_benchmark(&data, &bad).is_err());
    }

    #[test]
    fn failed_fit_becomes_error_cells() {
        let data = gen_synthetic(200, 4, 5).unwrap();
        let mut grids = BTreeMap::new();
        grids.insert(
            "logreg".to_string(),
            vec![TrainConfig::LogReg(LogRegConfig {
                learning_rate: -1.0,
                ..LogRegConfig::default()
            })],
        );
        let plan = BenchmarkPlan {
            models: vec!["logreg".into()],
            strategies: vec![Strategy::Baseline],
            power: false,
            grids,
            ..BenchmarkPlan::default()
        };
        let report = run_benchmark(&data, &plan).unwrap();
        assert_eq!(report.size[0].n_instances, 0);
        assert!(report.size[0].error.is_some());
        assert!(report.trained.is_empty());
        assert!(!report.all_checks_pass());
    }

    #[test]
    fn power_rows_report_family_errors() {
        let data = gen_synthetic(200, 4, 5).unwrap();
        let grids = vec![
            (
                "logreg".to_string(),
                vec![TrainConfig::LogReg(LogRegConfig::default())],
            ),
            (
                "broken".to_string(),
                vec![TrainConfig::LogReg(LogRegConfig {
                    learning_rate: -1.0,
                    ..LogRegConfig::default()
                })],
            ),
        ];
        let rows = run_power_benchmark(&data, &grids, 3, 0).unwrap();
        assert!(rows[0].accuracy.unwrap() > 0.6);
        assert!(rows[1].error.is_some() && rows[1].f1.is_none());
        assert!(format_power_table(&rows).contains("error"));
        assert!(run_power_benchmark(&data, &[], 3, 0).is_err());
    }
}
