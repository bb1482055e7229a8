//! The `suquan` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::harness::{
    cross_validate, run_simulation_study, simulate, CvPlan, CvResult, Method,
    QuantileChoice, SimulationSpec, StudyMethod, StudySpec, Truth,
};
use crate::io::{
    fmt_real, read_csv, render_csv, write_atomic, write_dataset_csv, write_json,
    ModelFile, ModelKind, TrainingMetadata, MODEL_SCHEMA_VERSION,
};
use crate::linmod::{auc, decision_values, fit_linear, LossKind, LossSpec, QuantileDesign};
use crate::quantiles::{quantile_normalize, QuantileFamily, TargetQuantile};
use crate::suquan::{suquan_alt, suquan_svd, AltOptions, Variant};

#[derive(Debug, Parser)]
#[command(name = "suquan", version, about = "Supervised quantile normalization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a simulated train/test pair and the generating truth.
    Simulate(SimulateArgs),
    /// Quantile-normalize every row of a CSV file.
    Normalize(NormalizeArgs),
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Score a labeled CSV file with a trained model.
    Evaluate(EvaluateArgs),
    /// Grid-search hyperparameters by repeated stratified k-fold.
    CrossValidate(CrossValidateArgs),
    /// Run the simulation study and write metrics.tsv and manifest.json.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    /// `none` or a distribution family.
    #[arg(long, default_value = "none")]
    pub corruption: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Family name, `median`, or `file:PATH`.
    #[arg(long, conflicts_with = "model")]
    pub quantile: Option<String>,
    /// Use the learned quantile of a model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Label column name or 0-based index; defaults to a `label` header.
    #[arg(long)]
    pub label_col: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Logistic,
    SuquanSvd,
    SuquanBnd,
    SuquanSpav,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Logistic,
    Squared,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Logistic => LossKind::Logistic,
            LossArg::Squared => LossKind::Squared,
        }
    }
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "logistic")]
    pub method: MethodArg,
    /// Fixed quantile (logistic) or starting quantile (bnd, spav): a family
    /// name, `median`, or `file:PATH`.
    #[arg(long, default_value = "median")]
    pub quantile: String,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    #[arg(long, value_enum, default_value = "logistic")]
    pub loss: LossArg,
    /// Choose lambda (and gamma) by cross-validation over the default grids.
    #[arg(long)]
    pub cv: bool,
    #[command(flatten)]
    pub cv_args: CvArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub label_col: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Metrics TSV; printed to stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-sample decision values TSV.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub label_col: Option<String>,
}

#[derive(Debug, Args)]
pub struct CrossValidateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "logistic")]
    pub method: MethodArg,
    #[arg(long, default_value = "median")]
    pub quantile: String,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    #[command(flatten)]
    pub cv_args: CvArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-fold validation AUC table.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub label_col: Option<String>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// p = 1000 and n_train up to 2000 instead of the default p = 200 preset.
    #[arg(long)]
    pub full: bool,
    /// Comma-separated training sizes, overriding the preset.
    #[arg(long, value_delimiter = ',')]
    pub n_train: Option<Vec<usize>>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Comma-separated methods, overriding the preset.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[command(flatten)]
    pub cv_args: CvArgs,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(threads) = std::env::var("SUQUAN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            log::warn!("could not set thread count: {e}");
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Normalize(a) => cmd_normalize(&a),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::CrossValidate(a) => cmd_cross_validate(&a).map(|_| ()),
        Command::Study(a) => cmd_study(&a),
    }
}

fn parse_corruption(s: &str) -> Result<Option<QuantileFamily>> {
    if s == "none" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let spec = SimulationSpec {
        p: a.p,
        n_train: a.n_train,
        n_test: a.n_test,
        corruption: parse_corruption(&a.corruption)?,
        seed: a.seed,
    };
    let sim = simulate(&spec)?;
    write_dataset_csv(&a.out_dir.join("train.csv"), &sim.train)?;
    write_dataset_csv(&a.out_dir.join("test.csv"), &sim.test)?;
    #[derive(Serialize)]
    struct TruthFile<'a> {
        spec: &'a SimulationSpec,
        #[serde(flatten)]
        truth: &'a Truth,
    }
    write_json(
        &a.out_dir.join("truth.json"),
        &TruthFile {
            spec: &spec,
            truth: &sim.truth,
        },
    )
}

/// Reads a quantile from JSON (an array, or an object with a `quantile`
/// field such as a model file) or from plain text numbers separated by
/// commas or whitespace.
pub fn read_quantile_file(path: &Path) -> Result<TargetQuantile> {
    let text = fs::read_to_string(path)?;
    let trimmed = text.trim_start();
    let values: Vec<f64> = if trimmed.starts_with('[') {
        serde_json::from_str(&text)?
    } else if trimmed.starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let q = v
            .get("quantile")
            .ok_or_else(|| Error::invalid("JSON quantile file needs a `quantile` field"))?;
        serde_json::from_value(q.clone())?
    } else {
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("`{s}` in quantile file is not a number")))
            })
            .collect::<Result<_>>()?
    };
    TargetQuantile::new(values)
}

/// Parses `median`, a family name or `file:PATH`.
pub fn parse_quantile_choice(s: &str) -> Result<QuantileChoice> {
    if s == "median" {
        Ok(QuantileChoice::Median)
    } else if let Some(path) = s.strip_prefix("file:") {
        read_quantile_file(Path::new(path)).map(QuantileChoice::Fixed)
    } else {
        s.parse().map(QuantileChoice::Family)
    }
}

pub fn cmd_normalize(a: &NormalizeArgs) -> Result<()> {
    let table = read_csv(&a.input, a.label_col.as_deref())?;
    let header = table.header.clone();
    let labels = table.labels.clone();
    let data = table.into_dataset_unlabeled("input")?;
    let quantile = match (&a.model, &a.quantile) {
        (Some(m), _) => ModelFile::load(m)?.target_quantile()?,
        (None, Some(q)) => parse_quantile_choice(q)?.resolve(&data)?,
        (None, None) => QuantileChoice::Median.resolve(&data)?,
    };
    if quantile.len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: quantile.len(),
        });
    }
    let mut out = Vec::with_capacity(data.features().len());
    for row in data.rows() {
        out.extend(quantile_normalize(row, &quantile)?);
    }
    let text = render_csv(header.as_deref(), data.p(), &out, labels.as_deref())?;
    write_atomic(&a.output, text.as_bytes())
}

fn method_of(m: MethodArg, quantile: &str, rounds: usize) -> Result<Method> {
    Ok(match m {
        MethodArg::Logistic => Method::Logistic {
            quantile: parse_quantile_choice(quantile)?,
        },
        MethodArg::SuquanSvd => Method::SuquanSvd,
        MethodArg::SuquanBnd => Method::SuquanBnd {
            f_init: parse_quantile_choice(quantile)?,
            rounds,
        },
        MethodArg::SuquanSpav => Method::SuquanSpav {
            f_init: parse_quantile_choice(quantile)?,
            rounds,
        },
    })
}

fn plan_of(cv: &CvArgs, seed: u64) -> CvPlan {
    CvPlan {
        repeats: cv.repeats,
        folds: cv.folds,
        seed,
        ..CvPlan::default()
    }
}

/// Fits the requested model on `data`. With `cv`, lambda and gamma come from
/// the default grids.
pub fn train_model(data: &Dataset, a: &TrainArgs) -> Result<ModelFile> {
    let loss = LossKind::from(a.loss);
    let method = method_of(a.method, &a.quantile, a.rounds)?;
    let (lambda, gamma) = if a.cv {
        if loss != LossKind::Logistic {
            return Err(Error::invalid("cross-validation scores by AUC and needs the logistic loss"));
        }
        let cv = cross_validate(data, &method, &plan_of(&a.cv_args, a.seed))?;
        log::info!("cross-validation picked lambda = {}, gamma = {}", cv.lambda, cv.gamma);
        (cv.lambda, cv.gamma)
    } else {
        (a.lambda, a.gamma)
    };

    let spec = LossSpec::new(loss, data.labels().to_vec())?;
    if loss == LossKind::Logistic {
        data.require_binary()?;
    }
    let mut metadata = TrainingMetadata {
        seed: a.seed,
        dataset_sha256: data.content_hash(),
        n_train: data.n(),
        rounds: 0,
        objective_trace: Vec::new(),
        converged: true,
    };
    let (kind, quantile, model, gamma) = match &method {
        Method::Logistic { .. } | Method::SuquanSvd => {
            let (kind, quantile) = match &method {
                Method::Logistic { quantile } => (ModelKind::Logistic, quantile.resolve(data)?),
                _ => (ModelKind::SuquanSvd, suquan_svd(data)?),
            };
            let design = QuantileDesign::new(data.sorted(), quantile.values())?;
            let fit = fit_linear(&design, &spec, lambda)?;
            metadata.objective_trace = vec![fit.objective];
            metadata.converged = fit.converged;
            (kind, quantile, fit.model, 0.0)
        }
        Method::SuquanBnd { f_init, rounds } | Method::SuquanSpav { f_init, rounds } => {
            let variant = if matches!(method, Method::SuquanBnd { .. }) {
                Variant::Bnd
            } else {
                Variant::Spav
            };
            let opts = AltOptions {
                variant,
                lambda,
                gamma,
                rounds: *rounds,
                loss,
            };
            let m = suquan_alt(data, &f_init.resolve(data)?, &opts)?;
            metadata.rounds = m.rounds;
            metadata.objective_trace = m.diagnostics.objective_trace;
            metadata.converged = m.diagnostics.converged;
            (ModelKind::from_variant(variant), m.quantile, m.model, m.gamma)
        }
    };
    if !metadata.converged {
        log::warn!("training stopped at the iteration limit before converging; the model is the best iterate found");
    }
    Ok(ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        variant: kind,
        quantile: quantile.into_values(),
        w: model.w,
        b: model.b,
        loss: model.loss,
        lambda: model.lambda,
        gamma,
        metadata,
    })
}

pub fn cmd_train(a: &TrainArgs) -> Result<ModelFile> {
    let data = read_csv(&a.input, a.label_col.as_deref())?.into_dataset("train")?;
    let model = train_model(&data, a)?;
    model.save(&a.output)?;
    Ok(model)
}

/// Decision values of `data` under a stored model.
pub fn model_scores(model: &ModelFile, data: &Dataset) -> Result<Vec<f64>> {
    model.validate()?;
    if model.quantile.len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: model.quantile.len(),
            found: data.p(),
        });
    }
    let design = QuantileDesign::new(data.sorted(), &model.quantile)?;
    decision_values(&model.linear_model(), &design)
}

/// Returns the AUC of the model on the input file.
pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<f64> {
    let model = ModelFile::load(&a.model)?;
    let data = read_csv(&a.input, a.label_col.as_deref())?.into_dataset("evaluate")?;
    let scores = model_scores(&model, &data)?;
    let value = auc(&scores, data.labels())?;
    let metrics = format!("metric\tvalue\nauc\t{}\nn\t{}\n", fmt_real(value), data.n());
    match &a.output {
        Some(path) => write_atomic(path, metrics.as_bytes())?,
        None => print!("{metrics}"),
    }
    if let Some(path) = &a.scores {
        let mut text = String::from("index\tlabel\tscore\n");
        for (i, (y, s)) in data.labels().iter().zip(&scores).enumerate() {
            text.push_str(&format!("{i}\t{}\t{}\n", fmt_real(*y), fmt_real(*s)));
        }
        write_atomic(path, text.as_bytes())?;
    }
    Ok(value)
}

pub fn cmd_cross_validate(a: &CrossValidateArgs) -> Result<CvResult> {
    let data = read_csv(&a.input, a.label_col.as_deref())?.into_dataset("cv")?;
    let method = method_of(a.method, &a.quantile, a.rounds)?;
    let cv = cross_validate(&data, &method, &plan_of(&a.cv_args, a.seed))?;
    println!(
        "lambda\t{}\ngamma\t{}\nmean_auc\t{}",
        fmt_real(cv.lambda),
        fmt_real(cv.gamma),
        fmt_real(cv.mean_auc)
    );
    if let Some(path) = &a.output {
        let mut text = String::from("repeat\tfold\tlambda\tgamma\tauc\n");
        for r in &cv.table {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.repeat,
                r.fold,
                fmt_real(r.lambda),
                fmt_real(r.gamma),
                if r.auc.is_nan() { "NA".into() } else { fmt_real(r.auc) }
            ));
        }
        write_atomic(path, text.as_bytes())?;
    }
    Ok(cv)
}

pub fn cmd_study(a: &StudyArgs) -> Result<()> {
    let mut spec = if a.full { StudySpec::full() } else { StudySpec::desk() };
    if let Some(n) = &a.n_train {
        spec.n_train = n.clone();
    }
    if let Some(p) = a.p {
        spec.p = p;
    }
    if let Some(methods) = &a.methods {
        spec.methods = methods
            .iter()
            .map(|m| m.parse::<StudyMethod>())
            .collect::<Result<_>>()?;
    }
    spec.plan = plan_of(&a.cv_args, a.seed);
    spec.rounds = a.rounds;
    spec.seed = a.seed;
    let report = run_simulation_study(&spec)?;
    report.write(&a.out_dir)
}
