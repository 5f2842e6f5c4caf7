use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cfexplain::bench::{run_benchmark, BenchmarkPlan, Population, Strategy};
use cfexplain::data::{gen_synthetic, load_csv, load_metadata, preprocess, Dataset};
use cfexplain::explain::{render, Explanation};
use cfexplain::generator::{generate_negative, generate_positive, CfConfig, CounterfactualResult};
use cfexplain::models::{cross_validate, Model, Predictor, TrainConfig, TrainReport};
use cfexplain::weights::{global_theta, importance_profile, knn_theta, ThetaTransform, DEFAULT_K};
use cfexplain::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cfexplain",
    version,
    about = "Counterfactual explanations for tabular classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset to CSV.
    Synth(SynthArgs),
    /// Train a model, optionally cross-validating it first.
    Train(TrainArgs),
    /// Explain one instance.
    Explain(ExplainArgs),
    /// Dump ANOVA F-values and distance weights.
    Weights(WeightsArgs),
    /// Predictive-power and counterfactual-size tables.
    Benchmark(BenchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV with a header row.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Name of the target column in `--data`.
    #[arg(long, default_value = "target")]
    target: String,
    /// JSON file with per-feature bounds, mutability and display hints.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Drop the later of any feature pair correlated above this.
    #[arg(long, default_value_t = 0.95)]
    corr_threshold: f64,
    /// Use the CSV as is, without correlation filtering or deduplication.
    #[arg(long)]
    no_preprocess: bool,
    /// Use generated data (the default when `--data` is absent).
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 2000)]
    synthetic_rows: usize,
    #[arg(long, default_value_t = 20)]
    synthetic_features: usize,
    #[arg(long, default_value_t = 42)]
    synthetic_seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let data = match &self.data {
            Some(path) => {
                let raw = load_csv(path, &self.target)?;
                if self.no_preprocess {
                    raw
                } else {
                    preprocess(&raw, self.corr_threshold)?
                }
            }
            None => gen_synthetic(
                self.synthetic_rows,
                self.synthetic_features,
                self.synthetic_seed,
            )?,
        };
        match &self.metadata {
            Some(path) => data.with_metadata(&load_metadata(path)?),
            None => Ok(data),
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Saved model JSON; when absent a model is trained on the data.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Family to train when `--model` is absent.
    #[arg(long, default_value = "logreg")]
    family: String,
}

impl ModelArgs {
    fn obtain(&self, data: &Dataset, seed: u64) -> Result<Model> {
        let model = match &self.model {
            Some(path) => Model::load(path)?,
            None => TrainConfig::default_for(&self.family)?
                .with_seed(seed)
                .fit(data)?,
        };
        if model.n_features() != data.n_features() {
            return Err(Error::DimensionMismatch {
                expected: data.n_features(),
                actual: model.n_features(),
            });
        }
        Ok(model)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    rows: usize,
    #[arg(long, default_value_t = 20)]
    features: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "target")]
    target: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Family trained with its defaults (ignored with `--config`).
    #[arg(long, default_value = "logreg")]
    family: String,
    /// JSON training configuration, e.g. `{"model": "log_reg", "l2": 0.01}`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-validation folds reported before the final fit; 0 skips it.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Where to save the model JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Negative when the model rejects the instance, positive otherwise.
    Auto,
    Positive,
    Negative,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Row of the dataset to explain.
    #[arg(long, conflicts_with = "values", required_unless_present = "values")]
    row: Option<usize>,
    /// Comma-separated feature values in column order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    #[arg(long, default_value = "baseline", value_parser = Strategy::from_str)]
    strategy: Strategy,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighbours for the knn strategy.
    #[arg(long, default_value_t = DEFAULT_K)]
    knn_k: usize,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Also write the JSON result here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Also compute local weights for this row.
    #[arg(long)]
    row: Option<usize>,
    /// Class whose neighbours define the local weights; defaults to the
    /// opposite of the row's label.
    #[arg(long)]
    desired_class: Option<u8>,
    #[arg(long, default_value_t = DEFAULT_K)]
    knn_k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instances explained per model.
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, value_delimiter = ',', value_parser = Strategy::from_str,
          default_value = "baseline,importance,knn")]
    strategies: Vec<Strategy>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "logreg,mlp,gradboost,svc"
    )]
    models: Vec<String>,
    /// Explain rejected rows (negative) or accepted rows (positive).
    #[arg(long, default_value = "rejected", value_parser = Population::from_str)]
    population: Population,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Skip the cross-validated grid search and train each family once.
    #[arg(long)]
    no_power: bool,
    /// JSON benchmark plan (grids, counterfactual settings); flags override
    /// the models, strategies, instances, population, folds and seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "benchmark_report.json")]
    report: PathBuf,
    /// Exit with status 1 if any check fails.
    #[arg(long)]
    check: bool,
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let data = gen_synthetic(args.rows, args.features, args.seed)?;
    data.write_csv(&args.out, &args.target)?;
    emit(&format!(
        "wrote {} rows x {} features to {}",
        data.n_rows(),
        data.n_features(),
        args.out.display()
    ))
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    config: &'a TrainConfig,
    cross_validation: Option<TrainReport>,
    model: &'a Path,
}

fn train(args: &TrainArgs) -> Result<()> {
    let data = args.data.load()?;
    let cfg = match &args.config {
        Some(path) => read_json::<TrainConfig>(path)?,
        None => TrainConfig::default_for(&args.family)?.with_seed(args.seed),
    };
    let cv = match args.folds {
        0 => None,
        k => Some(cross_validate(&data, &cfg, k, args.seed)?),
    };
    cfg.fit(&data)?.save(&args.out)?;
    let out = TrainOutput {
        config: &cfg,
        cross_validation: cv,
        model: &args.out,
    };
    emit(&serde_json::to_string_pretty(&out)?)
}

#[derive(Serialize)]
struct ExplainOutput<'a> {
    strategy: Strategy,
    #[serde(flatten)]
    result: &'a CounterfactualResult,
    explanation: &'a Explanation,
    text: &'a str,
}

fn explain(args: &ExplainArgs) -> Result<()> {
    let data = args.data.load()?;
    let model = args.model.obtain(&data, args.seed)?;
    let x: Vec<f64> = match (&args.values, args.row) {
        (Some(v), _) => v.clone(),
        (None, Some(i)) if i < data.n_rows() => data.row(i).to_vec(),
        (None, Some(i)) => {
            return Err(Error::InvalidArgument(format!(
                "row {i} out of range (dataset has {} rows)",
                data.n_rows()
            )))
        }
        (None, None) => unreachable!("clap requires --row or --values"),
    };
    data.check_instance(&x)?;
    let accepted = model.classify(&x) == 1;
    let positive = match args.mode {
        ModeArg::Auto => accepted,
        ModeArg::Positive => true,
        ModeArg::Negative => false,
    };
    let theta = match args.strategy {
        Strategy::Baseline => None,
        Strategy::Uniform => Some(cfexplain::distance::WeightVector::uniform(data.specs())?),
        Strategy::Importance => Some(global_theta(&data)?),
        Strategy::Knn => Some(knn_theta(&data, &x, u8::from(!positive), args.knn_k)?),
    };
    let cfg = CfConfig {
        epsilon: args.epsilon,
        restarts: args.restarts,
        seed: args.seed,
        theta,
        ..CfConfig::default()
    };
    let result = if positive {
        generate_positive(&x, &model, &data, &cfg)?
    } else {
        generate_negative(&x, &model, &data, &cfg)?
    };
    let rendered = render(&result, data.specs())?;
    let json = serde_json::to_string_pretty(&ExplainOutput {
        strategy: args.strategy,
        result: &result,
        explanation: &rendered.explanation,
        text: &rendered.text,
    })?;
    if let Some(path) = &args.json {
        write_file(path, &json)?;
    }
    match args.format {
        Format::Text => emit(&rendered.text),
        Format::Json => emit(&json),
    }
}

#[derive(Serialize)]
struct LocalWeights {
    row: usize,
    desired_class: u8,
    k: usize,
    theta: Vec<f64>,
}

#[derive(Serialize)]
struct WeightsOutput {
    features: Vec<String>,
    mutable: Vec<bool>,
    f_values: Vec<f64>,
    theta_global: Vec<f64>,
    theta_knn: Option<LocalWeights>,
}

fn weights(args: &WeightsArgs) -> Result<()> {
    let data = args.data.load()?;
    let profile = importance_profile(&data, ThetaTransform::default())?;
    let theta_knn = match args.row {
        Some(i) if i >= data.n_rows() => {
            return Err(Error::InvalidArgument(format!("row {i} out of range")))
        }
        Some(i) => {
            let desired = args.desired_class.unwrap_or(1 - data.targets()[i]);
            Some(LocalWeights {
                row: i,
                desired_class: desired,
                k: args.knn_k,
                theta: knn_theta(&data, data.row(i), desired, args.knn_k)?
                    .as_slice()
                    .to_vec(),
            })
        }
        None => None,
    };
    let out = WeightsOutput {
        features: data.names(),
        mutable: data.specs().iter().map(|s| s.mutable).collect(),
        f_values: profile.f_values,
        theta_global: profile.theta_global.as_slice().to_vec(),
        theta_knn,
    };
    let json = serde_json::to_string_pretty(&out)?;
    match &args.out {
        Some(path) => write_file(path, &json),
        None => emit(&json),
    }
}

fn benchmark(args: &BenchArgs) -> Result<bool> {
    let data = args.data.load()?;
    let mut plan = match &args.config {
        Some(path) => read_json::<BenchmarkPlan>(path)?,
        None => BenchmarkPlan::default(),
    };
    plan.models = args.models.clone();
    plan.strategies = args.strategies.clone();
    plan.power = !args.no_power;
    plan.folds = args.folds;
    plan.seed = args.seed;
    plan.size.n_instances = args.instances;
    plan.size.population = args.population;
    plan.size.cf.seed = args.seed;
    let report = run_benchmark(&data, &plan)?;
    write_file(&args.report, &report.to_json()?)?;
    emit(&format!(
        "{}report written to {}",
        report.to_text(),
        args.report.display()
    ))?;
    Ok(!args.check || report.all_checks_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Synth(a) => synth(a).map(|()| true),
        Command::Train(a) => train(a).map(|()| true),
        Command::Explain(a) => explain(a).map(|()| true),
        Command::Weights(a) => weights(a).map(|()| true),
        Command::Benchmark(a) => benchmark(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
