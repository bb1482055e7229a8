//! Experiment driver: simulated data, stratified cross-validation over
//! hyperparameter grids, and the simulation study with its metric tables.
//!
//! Randomness is seeded per task with [`derive_seed`], so results do not
//! depend on how tasks are scheduled across threads.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::io::{fmt_real, write_atomic, write_json};
use crate::linmod::{auc, decision_values, fit_linear, LinearModel, LossKind, LossSpec, QuantileDesign};
use crate::quantiles::{
    center_in_place, make_distribution_quantile, median_quantile, project_f0, rms, QuantileFamily,
    TargetQuantile,
};
use crate::suquan::{suquan_svd, AltOptions, AltRun, Diagnostics};

/// Mixes `coords` into `master` with splitmix64 steps.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    coords
        .iter()
        .fold(mix(master), |acc, &c| mix(acc ^ mix(c)))
}

/// Parameters of a simulated train/test pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub p: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Quantile the observed features are normalized to; `None` keeps the
    /// clean features.
    pub corruption: Option<QuantileFamily>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub f_true: TargetQuantile,
    pub w_true: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: Truth,
}

/// Draws samples as random permutations of the Gaussian quantile, labels from
/// a logistic model on those clean samples, then normalizes the features onto
/// the corruption quantile.
///
/// Permutations, labels and `w_true` depend only on `(p, n, seed)`, so specs
/// that differ only in `corruption` share the same underlying samples.
pub fn simulate(spec: &SimulationSpec) -> Result<Simulation> {
    if spec.p < 2 || spec.n_train == 0 || spec.n_test == 0 {
        return Err(Error::invalid(
            "simulation needs p >= 2 and at least one training and one test sample",
        ));
    }
    let f_true = make_distribution_quantile(QuantileFamily::Gaussian, spec.p)?;
    let observed = match spec.corruption {
        Some(family) => make_distribution_quantile(family, spec.p)?,
        None => f_true.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[0]));
    let w_true: Vec<f64> = (0..spec.p).map(|_| rng.sample(StandardNormal)).collect();

    let split = |stream: u64, n: usize, name: &str| -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[stream]));
        let mut features = Vec::with_capacity(n * spec.p);
        let mut labels = Vec::with_capacity(n);
        let mut perm: Vec<usize> = (0..spec.p).collect();
        for _ in 0..n {
            perm.shuffle(&mut rng);
            // perm[j] is the rank of entry j
            let margin: f64 = perm
                .iter()
                .zip(&w_true)
                .map(|(&r, w)| w * f_true.values()[r])
                .sum();
            let prob = 1.0 / (1.0 + (-margin).exp());
            let u: f64 = rng.random();
            labels.push(if u < prob { 1.0 } else { -1.0 });
            features.extend(perm.iter().map(|&r| observed.values()[r]));
        }
        Dataset::new(name, spec.p, features, labels)
    };
    Ok(Simulation {
        train: split(1, spec.n_train, "train")?,
        test: split(2, spec.n_test, "test")?,
        truth: Truth { f_true, w_true },
    })
}

/// Euclidean distance between the shapes of two quantiles: each is centered
/// and rescaled to `rms = 1` before comparing. Learned quantiles are only
/// identified up to scale (a factor can move between `f` and `w`), so the
/// scale is divided out.
pub fn quantile_distance(a: &TargetQuantile, b: &TargetQuantile) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    let a = unit_shape(a.values())?;
    let b = unit_shape(b.values())?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt())
}

fn unit_shape(values: &[f64]) -> Result<Vec<f64>> {
    // project_f0 rejects constant vectors and returns the centered values
    // shrunk to rms <= 1; rescaling the centered vector to rms 1 is then safe
    project_f0(values)?;
    let mut v = values.to_vec();
    center_in_place(&mut v);
    let r = rms(&v);
    v.iter_mut().for_each(|x| *x /= r);
    Ok(v)
}

/// Convention used by [`quantile_distance`], recorded in study manifests.
pub const DISTANCE_CONVENTION: &str =
    "euclidean distance after centering each quantile and rescaling it to rms = 1";

/// Log-spaced grid `10^lo, ..., 10^hi` with `count` points.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..count)
            .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Repeated stratified k-fold plan with hyperparameter grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub repeats: usize,
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            repeats: 5,
            folds: 3,
            lambda_grid: log_grid(-5.0, 5.0, 11),
            gamma_grid: log_grid(0.0, 4.0, 5),
            seed: 0,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 || self.repeats == 0 {
            return Err(Error::invalid("cross-validation needs folds >= 2 and repeats >= 1"));
        }
        for (name, grid) in [("lambda", &self.lambda_grid), ("gamma", &self.gamma_grid)] {
            if grid.is_empty() || grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::invalid(format!(
                    "{name} grid must be non-empty with positive finite values"
                )));
            }
        }
        Ok(())
    }
}

/// Assigns each sample to a fold, shuffling each class and dealing it out
/// round-robin so that per-fold class counts differ by at most one.
pub fn stratified_folds(labels: &[f64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut classes: Vec<f64> = labels.to_vec();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    let mut next = 0;
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::invalid(format!(
                "class {class} has {} samples, too few to stratify into {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

/// A trained quantile plus linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub quantile: TargetQuantile,
    pub model: LinearModel,
    pub diagnostics: Option<Diagnostics>,
}

impl Fitted {
    /// Scores of `data` after normalizing it onto the fitted quantile.
    pub fn decision_values(&self, data: &Dataset) -> Result<Vec<f64>> {
        let design = QuantileDesign::new(data.sorted(), self.quantile.values())?;
        decision_values(&self.model, &design)
    }

    pub fn auc(&self, data: &Dataset) -> Result<f64> {
        auc(&self.decision_values(data)?, data.labels())
    }
}

/// Anything that can be cross-validated.
pub trait Learner: Sync {
    fn name(&self) -> String;

    /// Whether `gamma` is a hyperparameter of this learner.
    fn uses_gamma(&self) -> bool {
        false
    }

    fn fit(&self, train: &Dataset, lambda: f64, gamma: f64) -> Result<Fitted>;

    /// Fits every grid point, lambda-major. Learners can override this to
    /// share work across the grid.
    fn fit_grid(&self, train: &Dataset, lambdas: &[f64], gammas: &[f64]) -> Vec<Result<Fitted>> {
        lambdas
            .iter()
            .flat_map(|&l| gammas.iter().map(move |&g| self.fit(train, l, g)))
            .collect()
    }
}

/// Where a fixed or initial quantile comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantileChoice {
    /// Median of the training samples' sorted values.
    Median,
    Family(QuantileFamily),
    Fixed(TargetQuantile),
}

impl QuantileChoice {
    pub fn resolve(&self, train: &Dataset) -> Result<TargetQuantile> {
        match self {
            QuantileChoice::Median => median_quantile(train),
            QuantileChoice::Family(f) => make_distribution_quantile(*f, train.p()),
            QuantileChoice::Fixed(q) => {
                check_dim(train.p(), q.len())?;
                Ok(q.clone())
            }
        }
    }
}

impl fmt::Display for QuantileChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantileChoice::Median => f.write_str("median"),
            QuantileChoice::Family(fam) => write!(f, "{fam}"),
            QuantileChoice::Fixed(_) => f.write_str("fixed"),
        }
    }
}

/// The learners of this crate, all with logistic loss.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Standard quantile normalization onto a fixed quantile, then a linear
    /// model.
    Logistic { quantile: QuantileChoice },
    /// Quantile from the top singular vector, then a linear model on it.
    SuquanSvd,
    SuquanBnd { f_init: QuantileChoice, rounds: usize },
    SuquanSpav { f_init: QuantileChoice, rounds: usize },
}

impl Method {
    fn alt(&self, lambda: f64, gamma: f64) -> Option<(&QuantileChoice, AltOptions)> {
        match self {
            Method::SuquanBnd { f_init, rounds } => Some((
                f_init,
                AltOptions {
                    rounds: *rounds,
                    ..AltOptions::bnd(lambda)
                },
            )),
            Method::SuquanSpav { f_init, rounds } => Some((
                f_init,
                AltOptions {
                    rounds: *rounds,
                    ..AltOptions::spav(lambda, gamma)
                },
            )),
            _ => None,
        }
    }
}

fn fit_fixed(train: &Dataset, quantile: TargetQuantile, lambda: f64) -> Result<Fitted> {
    let spec = LossSpec::new(LossKind::Logistic, train.labels().to_vec())?;
    train.require_binary()?;
    let design = QuantileDesign::new(train.sorted(), quantile.values())?;
    let fit = fit_linear(&design, &spec, lambda)?;
    Ok(Fitted {
        quantile,
        model: fit.model,
        diagnostics: None,
    })
}

fn finish_run(mut run: AltRun<'_>, opts: &AltOptions) -> Result<Fitted> {
    for round in 0..opts.rounds {
        if round > 0 {
            run.w_step()?;
        }
        run.f_step(opts.variant, opts.gamma)?;
    }
    let m = run.finish(opts)?;
    Ok(Fitted {
        quantile: m.quantile,
        model: m.model,
        diagnostics: Some(m.diagnostics),
    })
}

impl Learner for Method {
    fn name(&self) -> String {
        match self {
            Method::Logistic { .. } => "logistic".into(),
            Method::SuquanSvd => "suquan-svd".into(),
            Method::SuquanBnd { .. } => "suquan-bnd".into(),
            Method::SuquanSpav { .. } => "suquan-spav".into(),
        }
    }

    fn uses_gamma(&self) -> bool {
        matches!(self, Method::SuquanSpav { .. })
    }

    fn fit(&self, train: &Dataset, lambda: f64, gamma: f64) -> Result<Fitted> {
        match self {
            Method::Logistic { quantile } => fit_fixed(train, quantile.resolve(train)?, lambda),
            Method::SuquanSvd => fit_fixed(train, suquan_svd(train)?, lambda),
            _ => {
                let (f_init, opts) = self.alt(lambda, gamma).expect("alternating method");
                let f0 = f_init.resolve(train)?;
                finish_run(AltRun::start(train, &f0, &opts)?, &opts)
            }
        }
    }

    fn fit_grid(&self, train: &Dataset, lambdas: &[f64], gammas: &[f64]) -> Vec<Result<Fitted>> {
        let per_lambda = |lambda: f64| -> Vec<Result<Fitted>> {
            match self {
                Method::Logistic { quantile } => {
                    let q = quantile.resolve(train);
                    gammas
                        .iter()
                        .map(|_| match &q {
                            Ok(q) => fit_fixed(train, q.clone(), lambda),
                            Err(e) => Err(e.duplicate()),
                        })
                        .collect()
                }
                Method::SuquanSvd => {
                    let q = suquan_svd(train);
                    gammas
                        .iter()
                        .map(|_| match &q {
                            Ok(q) => fit_fixed(train, q.clone(), lambda),
                            Err(e) => Err(e.duplicate()),
                        })
                        .collect()
                }
                Method::SuquanBnd { .. } => gammas.iter().map(|&g| self.fit(train, lambda, g)).collect(),
                Method::SuquanSpav { .. } => {
                    // the first w-step does not depend on gamma
                    let (f_init, opts) = self.alt(lambda, gammas[0]).expect("alternating method");
                    let start = f_init
                        .resolve(train)
                        .and_then(|f0| AltRun::start(train, &f0, &opts));
                    gammas
                        .iter()
                        .map(|&g| {
                            let start = start.as_ref().map_err(Error::duplicate)?;
                            let opts = AltOptions { gamma: g, ..opts };
                            finish_run(start.fork(g)?, &opts)
                        })
                        .collect()
                }
            }
        };
        lambdas.iter().flat_map(|&l| per_lambda(l)).collect()
    }
}

/// Validation AUC of one grid point on one fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub repeat: usize,
    pub fold: usize,
    pub lambda: f64,
    pub gamma: f64,
    /// `NaN` if the fit failed.
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    pub gamma: f64,
    pub mean_auc: f64,
    pub table: Vec<CvRecord>,
}

/// Grid search by mean validation AUC over repeated stratified folds. Ties
/// (within 1e-12) go to the larger lambda, then the larger gamma. Learners
/// without a gamma hyperparameter report `gamma = 0`.
pub fn cross_validate(data: &Dataset, learner: &dyn Learner, plan: &CvPlan) -> Result<CvResult> {
    plan.validate()?;
    data.require_binary()?;
    let gammas: Vec<f64> = if learner.uses_gamma() {
        plan.gamma_grid.clone()
    } else {
        vec![0.0]
    };
    let lambdas = &plan.lambda_grid;

    let assignments = (0..plan.repeats)
        .map(|r| stratified_folds(data.labels(), plan.folds, derive_seed(plan.seed, &[r as u64])))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..plan.repeats)
        .flat_map(|r| (0..plan.folds).map(move |k| (r, k)))
        .collect();

    let results: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(r, k)| {
            let (train_idx, val_idx): (Vec<usize>, Vec<usize>) =
                (0..data.n()).partition(|&i| assignments[r][i] != k);
            let train = data.subset(&train_idx);
            let val = data.subset(&val_idx);
            learner
                .fit_grid(&train, lambdas, &gammas)
                .into_iter()
                .map(|fit| fit.and_then(|f| f.auc(&val)).unwrap_or(f64::NAN))
                .collect()
        })
        .collect();

    let mut table = Vec::with_capacity(tasks.len() * lambdas.len() * gammas.len());
    for (&(repeat, fold), aucs) in tasks.iter().zip(&results) {
        for (idx, &a) in aucs.iter().enumerate() {
            table.push(CvRecord {
                repeat,
                fold,
                lambda: lambdas[idx / gammas.len()],
                gamma: gammas[idx % gammas.len()],
                auc: a,
            });
        }
    }

    let mut best: Option<(f64, f64, f64)> = None;
    for (li, &lambda) in lambdas.iter().enumerate() {
        for (gi, &gamma) in gammas.iter().enumerate() {
            let idx = li * gammas.len() + gi;
            let mean = results.iter().map(|a| a[idx]).sum::<f64>() / results.len() as f64;
            if mean.is_nan() {
                continue;
            }
            let better = match best {
                None => true,
                Some((s, l, g)) => {
                    if mean > s + 1e-12 {
                        true
                    } else if mean >= s - 1e-12 {
                        lambda > l || (lambda == l && gamma > g)
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((mean, lambda, gamma));
            }
        }
    }
    let (mean_auc, lambda, gamma) = best.ok_or_else(|| {
        Error::numeric(format!("{} failed at every grid point", learner.name()))
    })?;
    Ok(CvResult {
        lambda,
        gamma,
        mean_auc,
        table,
    })
}

/// Methods compared by the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyMethod {
    /// Logistic regression on the clean samples (baseline, always run).
    LogisticClean,
    /// Logistic regression on the corrupted samples.
    LogisticCorrupted,
    SuquanSvd,
    SuquanBnd,
    SuquanSpav,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 5] = [
        StudyMethod::LogisticClean,
        StudyMethod::LogisticCorrupted,
        StudyMethod::SuquanSvd,
        StudyMethod::SuquanBnd,
        StudyMethod::SuquanSpav,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyMethod::LogisticClean => "logistic-clean",
            StudyMethod::LogisticCorrupted => "logistic-corrupted",
            StudyMethod::SuquanSvd => "suquan-svd",
            StudyMethod::SuquanBnd => "suquan-bnd",
            StudyMethod::SuquanSpav => "suquan-spav",
        }
    }

    fn method(self, rounds: usize) -> Method {
        match self {
            StudyMethod::LogisticClean | StudyMethod::LogisticCorrupted => Method::Logistic {
                quantile: QuantileChoice::Median,
            },
            StudyMethod::SuquanSvd => Method::SuquanSvd,
            StudyMethod::SuquanBnd => Method::SuquanBnd {
                f_init: QuantileChoice::Median,
                rounds,
            },
            StudyMethod::SuquanSpav => Method::SuquanSpav {
                f_init: QuantileChoice::Median,
                rounds,
            },
        }
    }
}

impl fmt::Display for StudyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StudyMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown study method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub p: usize,
    pub n_train: Vec<usize>,
    pub n_test: usize,
    pub corruptions: Vec<QuantileFamily>,
    pub methods: Vec<StudyMethod>,
    pub plan: CvPlan,
    pub rounds: usize,
    pub seed: u64,
}

impl StudySpec {
    /// p = 200, n_train in {100, 500, 1000}, n_test = 1000, all four
    /// corruptions, every method.
    pub fn desk() -> Self {
        Self {
            p: 200,
            n_train: vec![100, 500, 1000],
            n_test: 1000,
            corruptions: vec![
                QuantileFamily::Cauchy,
                QuantileFamily::Exponential,
                QuantileFamily::Uniform,
                QuantileFamily::BimodalGaussian,
            ],
            methods: vec![
                StudyMethod::LogisticClean,
                StudyMethod::LogisticCorrupted,
                StudyMethod::SuquanBnd,
                StudyMethod::SuquanSpav,
            ],
            plan: CvPlan::default(),
            rounds: 1,
            seed: 0,
        }
    }

    /// p = 1000, n_train from 100 to 2000.
    pub fn full() -> Self {
        Self {
            p: 1000,
            n_train: vec![100, 250, 500, 1000, 2000],
            ..Self::desk()
        }
    }
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub method: String,
    pub corruption: String,
    pub n_train: usize,
    /// `test` for held-out rows, `mean` for averages over corruptions.
    pub fold: String,
    pub auc: f64,
    pub quantile_distance: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub spec: StudySpec,
    pub distance_convention: String,
    pub rows: Vec<StudyRow>,
}

impl StudyReport {
    pub fn row(&self, method: StudyMethod, corruption: &str, n_train: usize) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.corruption == corruption && r.n_train == n_train)
    }

    pub fn to_tsv(&self) -> String {
        let mut out =
            String::from("method\tcorruption\tn_train\tfold\tauc\tquantile_distance\tlambda\tgamma\tseed\n");
        let real = |x: f64| if x.is_nan() { "NA".to_string() } else { fmt_real(x) };
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.method,
                r.corruption,
                r.n_train,
                r.fold,
                real(r.auc),
                real(r.quantile_distance),
                real(r.lambda),
                real(r.gamma),
                r.seed
            ));
        }
        out
    }

    /// Writes `metrics.tsv` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("metrics.tsv"), self.to_tsv().as_bytes())?;
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'static str,
            version: &'static str,
            spec: &'a StudySpec,
            distance_convention: &'a str,
            rows: usize,
        }
        write_json(
            &dir.join("manifest.json"),
            &Manifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                spec: &self.spec,
                distance_convention: &self.distance_convention,
                rows: self.rows.len(),
            },
        )
    }
}

/// Runs every `(n_train, corruption, method)` cell: hyperparameters by inner
/// cross-validation on the training split, then test AUC and the distance
/// between the learned and the true quantile. The clean baseline does not
/// depend on the corruption; it is fitted once per `n_train` and reported in
/// every corruption group. Appends per-method means over corruptions.
pub fn run_simulation_study(spec: &StudySpec) -> Result<StudyReport> {
    spec.plan.validate()?;
    if spec.corruptions.is_empty() || spec.n_train.is_empty() {
        return Err(Error::invalid("study needs at least one corruption and one n_train"));
    }
    let mut methods = vec![StudyMethod::LogisticClean];
    methods.extend(spec.methods.iter().filter(|m| **m != StudyMethod::LogisticClean));

    struct Cell {
        n_train: usize,
        corruption: Option<usize>,
        method: StudyMethod,
    }
    let mut cells = Vec::new();
    for &n_train in &spec.n_train {
        for &method in &methods {
            if method == StudyMethod::LogisticClean {
                cells.push(Cell {
                    n_train,
                    corruption: None,
                    method,
                });
            } else {
                for c in 0..spec.corruptions.len() {
                    cells.push(Cell {
                        n_train,
                        corruption: Some(c),
                        method,
                    });
                }
            }
        }
    }

    let outcomes: Vec<(f64, f64, f64, f64, u64)> = cells
        .par_iter()
        .map(|cell| {
            let sim_seed = derive_seed(spec.seed, &[0, cell.n_train as u64]);
            let cv_seed = derive_seed(spec.seed, &[1, cell.n_train as u64]);
            let sim = simulate(&SimulationSpec {
                p: spec.p,
                n_train: cell.n_train,
                n_test: spec.n_test,
                corruption: cell.corruption.map(|c| spec.corruptions[c]),
                seed: sim_seed,
            })?;
            let learner = cell.method.method(spec.rounds);
            let plan = CvPlan {
                seed: cv_seed,
                ..spec.plan.clone()
            };
            let cv = cross_validate(&sim.train, &learner, &plan)?;
            let fitted = learner.fit(&sim.train, cv.lambda, cv.gamma)?;
            let test_auc = fitted.auc(&sim.test)?;
            let dist = quantile_distance(&fitted.quantile, &sim.truth.f_true)?;
            log::info!(
                "{} n={} corruption={}: auc {test_auc:.4}, distance {dist:.4}",
                cell.method,
                cell.n_train,
                cell.corruption.map_or("none".into(), |c| spec.corruptions[c].to_string())
            );
            Ok((test_auc, dist, cv.lambda, cv.gamma, cv_seed))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &n_train in &spec.n_train {
        for &method in &methods {
            let mut group = Vec::new();
            for (c, family) in spec.corruptions.iter().enumerate() {
                let (idx, _) = cells
                    .iter()
                    .enumerate()
                    .find(|(_, cell)| {
                        cell.n_train == n_train
                            && cell.method == method
                            && (cell.corruption.is_none() || cell.corruption == Some(c))
                    })
                    .expect("cell exists");
                let (a, d, l, g, s) = outcomes[idx];
                group.push((a, d));
                rows.push(StudyRow {
                    method: method.name().into(),
                    corruption: family.to_string(),
                    n_train,
                    fold: "test".into(),
                    auc: a,
                    quantile_distance: d,
                    lambda: l,
                    gamma: g,
                    seed: s,
                });
            }
            let k = group.len() as f64;
            rows.push(StudyRow {
                method: method.name().into(),
                corruption: "mean".into(),
                n_train,
                fold: "mean".into(),
                auc: group.iter().map(|x| x.0).sum::<f64>() / k,
                quantile_distance: group.iter().map(|x| x.1).sum::<f64>() / k,
                lambda: f64::NAN,
                gamma: f64::NAN,
                seed: spec.seed,
            });
        }
    }
    Ok(StudyReport {
        spec: spec.clone(),
        distance_convention: DISTANCE_CONVENTION.into(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_by_coordinate() {
        let a = derive_seed(7, &[0, 1]);
        assert_ne!(a, derive_seed(7, &[1, 0]));
        assert_ne!(a, derive_seed(8, &[0, 1]));
        assert_eq!(a, derive_seed(7, &[0, 1]));
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(-5.0, 5.0, 11);
        assert_eq!(g.len(), 11);
        assert!((g[0] - 1e-5).abs() < 1e-20 && (g[10] - 1e5).abs() < 1e-9);
        assert!((g[5] - 1.0).abs() < 1e-15);
        assert_eq!(log_grid(2.0, 3.0, 1), vec![100.0]);
    }

    #[test]
    fn folds_are_balanced() {
        let labels: Vec<f64> = (0..23).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let a = stratified_folds(&labels, 3, 1).unwrap();
        for class in [1.0, -1.0] {
            let counts: Vec<usize> = (0..3)
                .map(|k| (0..23).filter(|&i| a[i] == k && labels[i] == class).count())
                .collect();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
        assert!(stratified_folds(&[1.0, -1.0, -1.0], 2, 0).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(CvPlan::default().validate().is_ok());
        let bad = CvPlan {
            folds: 1,
            ..CvPlan::default()
        };
        assert!(bad.validate().is_err());
        let bad = CvPlan {
            lambda_grid: vec![],
            ..CvPlan::default()
        };
        assert!(bad.validate().is_err());
        let bad = CvPlan {
            gamma_grid: vec![-1.0],
            ..CvPlan::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn distance_of_opposites() {
        let a = TargetQuantile::new(vec![-1.0, 1.0]).unwrap();
        let b = TargetQuantile::new(vec![1.0, -1.0]).unwrap();
        assert!((quantile_distance(&a, &b).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(quantile_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn clean_and_gaussian_corruption_agree() {
        let mut spec = SimulationSpec {
            p: 10,
            n_train: 20,
            n_test: 5,
            corruption: None,
            seed: 3,
        };
        let clean = simulate(&spec).unwrap();
        spec.corruption = Some(QuantileFamily::Gaussian);
        let same = simulate(&spec).unwrap();
        assert_eq!(clean.train, same.train);
        spec.corruption = Some(QuantileFamily::Cauchy);
        let corrupted = simulate(&spec).unwrap();
        assert_eq!(clean.train.labels(), corrupted.train.labels());
        assert_eq!(clean.train.sorted(), corrupted.train.sorted());
    }
}
