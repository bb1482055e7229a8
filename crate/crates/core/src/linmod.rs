//! L2-penalized linear models with an unpenalized intercept.
//!
//! The fitter minimizes `(1/n) sum_i loss(y_i, w^T z_i + b) + lambda ||w||^2`
//! over an implicit design: rows `z_i` are only reached through
//! [`Design::row_dot`] and [`Design::add_row`], so the same code fits raw
//! features and quantile-normalized features `f[rank_i]` without building the
//! normalized matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::optim::{self, NoProx, Settings, Smooth};
use crate::perm::SortedSample;

/// Row access to an `n x p` design matrix.
pub trait Design: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// `z_i^T w`.
    fn row_dot(&self, i: usize, w: &[f64]) -> f64;
    /// `out += alpha * z_i`.
    fn add_row(&self, i: usize, alpha: f64, out: &mut [f64]);
}

/// A row-major matrix held in memory.
#[derive(Debug, Clone, Copy)]
pub struct DenseDesign<'a> {
    data: &'a [f64],
    p: usize,
}

impl<'a> DenseDesign<'a> {
    pub fn new(data: &'a [f64], p: usize) -> Result<Self> {
        if p == 0 || data.len() % p != 0 {
            return Err(Error::invalid("matrix data does not split into rows"));
        }
        Ok(Self { data, p })
    }
}

impl Design for DenseDesign<'_> {
    fn n_rows(&self) -> usize {
        self.data.len() / self.p
    }
    fn n_cols(&self) -> usize {
        self.p
    }
    #[inline]
    fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        let row = &self.data[i * self.p..(i + 1) * self.p];
        row.iter().zip(w).map(|(a, b)| a * b).sum()
    }
    #[inline]
    fn add_row(&self, i: usize, alpha: f64, out: &mut [f64]) {
        let row = &self.data[i * self.p..(i + 1) * self.p];
        for (o, a) in out.iter_mut().zip(row) {
            *o += alpha * a;
        }
    }
}

/// Rows `f[rank_i]`: every sample quantile-normalized onto `f`.
#[derive(Debug, Clone, Copy)]
pub struct QuantileDesign<'a> {
    samples: &'a [SortedSample],
    f: &'a [f64],
}

impl<'a> QuantileDesign<'a> {
    pub fn new(samples: &'a [SortedSample], f: &'a [f64]) -> Result<Self> {
        for s in samples {
            check_dim(f.len(), s.len())?;
        }
        Ok(Self { samples, f })
    }
}

impl Design for QuantileDesign<'_> {
    fn n_rows(&self) -> usize {
        self.samples.len()
    }
    fn n_cols(&self) -> usize {
        self.f.len()
    }
    #[inline]
    fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        self.samples[i].bilinear(w, self.f)
    }
    #[inline]
    fn add_row(&self, i: usize, alpha: f64, out: &mut [f64]) {
        self.samples[i].add_pi(alpha, self.f, out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `log(1 + exp(-y u))`, labels in `{-1, +1}`.
    Logistic,
    /// `(y - u)^2`.
    Squared,
}

impl LossKind {
    /// Upper bound on the second derivative.
    pub(crate) fn curvature(self) -> f64 {
        match self {
            LossKind::Logistic => 0.25,
            LossKind::Squared => 2.0,
        }
    }

    #[inline]
    fn value_deriv(self, y: f64, u: f64) -> (f64, f64) {
        match self {
            LossKind::Logistic => {
                let m = -y * u;
                // log(1 + e^m) and its derivative sigmoid(m), overflow-safe
                let (value, sig) = if m > 0.0 {
                    let e = (-m).exp();
                    (m + e.ln_1p(), 1.0 / (1.0 + e))
                } else {
                    let e = m.exp();
                    (e.ln_1p(), e / (1.0 + e))
                };
                (value, -y * sig)
            }
            LossKind::Squared => {
                let r = y - u;
                (r * r, -2.0 * r)
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Logistic => "logistic",
            LossKind::Squared => "squared",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(LossKind::Logistic),
            "squared" => Ok(LossKind::Squared),
            other => Err(Error::invalid(format!("unknown loss `{other}`"))),
        }
    }
}

/// A loss together with the responses it is evaluated against.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
    labels: Vec<f64>,
}

impl LossSpec {
    pub fn new(kind: LossKind, labels: Vec<f64>) -> Result<Self> {
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("non-finite response"));
        }
        if kind == LossKind::Logistic && labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid("logistic labels must be +1 or -1"));
        }
        Ok(Self { kind, labels })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Mean loss, writing per-sample derivatives `loss_i'(u_i)` into `deriv`.
    pub(crate) fn eval_into(&self, margins: &[f64], deriv: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for ((d, &y), &u) in deriv.iter_mut().zip(&self.labels).zip(margins) {
            let (v, g) = self.kind.value_deriv(y, u);
            total += v;
            *d = g;
        }
        total / self.labels.len() as f64
    }

    pub(crate) fn eval(&self, margins: &[f64]) -> f64 {
        let total: f64 = self
            .labels
            .iter()
            .zip(margins)
            .map(|(&y, &u)| self.kind.value_deriv(y, u).0)
            .sum();
        total / self.labels.len() as f64
    }
}

/// `(1/n) sum_i loss_i(u_i)` and the per-sample derivatives `loss_i'(u_i)`.
pub fn loss_value_grad(spec: &LossSpec, margins: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim(spec.len(), margins.len())?;
    if margins.iter().any(|u| !u.is_finite()) {
        return Err(Error::invalid("non-finite margin"));
    }
    if spec.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let mut deriv = vec![0.0; margins.len()];
    let value = spec.eval_into(margins, &mut deriv);
    Ok((value, deriv))
}

/// Weights, intercept and the settings they were fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub loss: LossKind,
    pub lambda: f64,
}

impl LinearModel {
    pub fn zeros(p: usize, loss: LossKind, lambda: f64) -> Self {
        Self {
            w: vec![0.0; p],
            b: 0.0,
            loss,
            lambda,
        }
    }
}

/// Result of [`fit_linear`].
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub model: LinearModel,
    /// Penalized objective at the returned model.
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out; the model is still the best
    /// iterate found.
    pub converged: bool,
}

pub const FIT_MAX_ITER: usize = 5000;
/// The fit stops on the size of the gradient mapping only. A relative
/// decrease test at 1e-9 stops well conditioned ridge problems about 1e-5
/// away from the minimizer.
pub const FIT_GRAD_TOL: f64 = 1e-7;

/// Penalized objective `(1/n) sum loss_i(w^T z_i + b) + lambda ||w||^2` with
/// its gradient in `w` and `b`.
pub fn objective_value_grad<D: Design>(
    design: &D,
    spec: &LossSpec,
    lambda: f64,
    w: &[f64],
    b: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    check_dim(design.n_rows(), spec.len())?;
    check_dim(design.n_cols(), w.len())?;
    let n = design.n_rows();
    let margins: Vec<f64> = (0..n).map(|i| design.row_dot(i, w) + b).collect();
    let mut deriv = vec![0.0; n];
    let loss = spec.eval_into(&margins, &mut deriv);
    let mut grad_w: Vec<f64> = w.iter().map(|wj| 2.0 * lambda * wj).collect();
    let mut grad_b = 0.0;
    for (i, d) in deriv.iter().enumerate() {
        design.add_row(i, d / n as f64, &mut grad_w);
        grad_b += d / n as f64;
    }
    let penalty = lambda * w.iter().map(|v| v * v).sum::<f64>();
    Ok((loss + penalty, grad_w, grad_b))
}

/// The w-step problem in column-centered coordinates: `x = [w; c]` with
/// `b = c - w^T mean`. Centering decouples the intercept from the weights
/// without changing the minimizer.
struct WStep<'a, D: Design> {
    design: &'a D,
    spec: &'a LossSpec,
    lambda: f64,
    mean: Vec<f64>,
}

impl<D: Design> WStep<'_, D> {
    fn margins(&self, x: &[f64], out: &mut [f64]) {
        let p = self.mean.len();
        let (w, c) = (&x[..p], x[p]);
        let shift = c - dot(w, &self.mean);
        for (i, m) in out.iter_mut().enumerate() {
            *m = self.design.row_dot(i, w) + shift;
        }
    }
}

impl<D: Design> Smooth for WStep<'_, D> {
    fn dim(&self) -> usize {
        self.mean.len() + 1
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.mean.len();
        let n = self.spec.len();
        let mut margins = vec![0.0; n];
        self.margins(x, &mut margins);
        let mut deriv = vec![0.0; n];
        let loss = self.spec.eval_into(&margins, &mut deriv);
        let w = &x[..p];
        let (gw, gc) = grad.split_at_mut(p);
        let mut total = 0.0;
        for (g, wj) in gw.iter_mut().zip(w) {
            *g = 2.0 * self.lambda * wj;
        }
        for (i, d) in deriv.iter().enumerate() {
            let a = d / n as f64;
            self.design.add_row(i, a, gw);
            total += a;
        }
        for (g, m) in gw.iter_mut().zip(&self.mean) {
            *g -= total * m;
        }
        gc[0] = total;
        loss + self.lambda * dot(w, w)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let p = self.mean.len();
        let mut margins = vec![0.0; self.spec.len()];
        self.margins(x, &mut margins);
        self.spec.eval(&margins) + self.lambda * dot(&x[..p], &x[..p])
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn validate_fit<D: Design>(design: &D, spec: &LossSpec, lambda: f64) -> Result<()> {
    check_dim(design.n_rows(), spec.len())?;
    if design.n_rows() < 2 {
        return Err(Error::invalid("need at least two samples to fit"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if spec.kind() == LossKind::Logistic {
        let pos = spec.labels().iter().filter(|&&y| y > 0.0).count();
        if pos == 0 || pos == spec.len() {
            return Err(Error::DegenerateLabels(
                "logistic fit needs both classes".into(),
            ));
        }
    }
    Ok(())
}

/// Fits from `w = 0, b = 0`.
pub fn fit_linear<D: Design>(design: &D, spec: &LossSpec, lambda: f64) -> Result<LinearFit> {
    let start = LinearModel::zeros(design.n_cols(), spec.kind(), lambda);
    fit_linear_from(design, spec, lambda, &start)
}

/// Fits starting from `start`. The returned objective never exceeds the
/// objective at `start`.
pub fn fit_linear_from<D: Design>(
    design: &D,
    spec: &LossSpec,
    lambda: f64,
    start: &LinearModel,
) -> Result<LinearFit> {
    validate_fit(design, spec, lambda)?;
    let n = design.n_rows();
    let p = design.n_cols();
    check_dim(p, start.w.len())?;

    let mut mean = vec![0.0; p];
    for i in 0..n {
        design.add_row(i, 1.0 / n as f64, &mut mean);
    }
    let problem = WStep {
        design,
        spec,
        lambda,
        mean,
    };

    // top eigenvalue of Zc^T Zc / n
    let sigma = optim::power_estimate(p, 15, |v, out| {
        let shift = dot(v, &problem.mean);
        let mut acc = vec![0.0; p];
        let mut total = 0.0;
        for i in 0..n {
            let a = (design.row_dot(i, v) - shift) / n as f64;
            design.add_row(i, a, &mut acc);
            total += a;
        }
        for j in 0..p {
            out[j] = acc[j] - total * problem.mean[j];
        }
    });
    let c = spec.kind().curvature();
    let mut metric = vec![(c * sigma + 2.0 * lambda).max(1e-12); p + 1];
    metric[p] = c;

    let mut x0 = start.w.clone();
    x0.push(start.b + dot(&start.w, &problem.mean));

    let out = optim::minimize(
        &problem,
        &NoProx,
        x0,
        metric,
        Settings {
            max_iter: FIT_MAX_ITER,
            rel_tol: 0.0,
            grad_tol: FIT_GRAD_TOL,
        },
    );
    if !out.objective.is_finite() || out.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("linear model fit produced non-finite values"));
    }
    // expected at tiny lambda on separable folds, so only logged at debug
    // level; callers see the flag
    if !out.converged {
        log::debug!(
            "linear fit (lambda = {lambda}) stopped after {} iterations without converging",
            out.iterations
        );
    }
    let w = out.x[..p].to_vec();
    let b = out.x[p] - dot(&w, &problem.mean);
    Ok(LinearFit {
        model: LinearModel {
            w,
            b,
            loss: spec.kind(),
            lambda,
        },
        objective: out.objective,
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// `w^T z_i + b` for every row.
pub fn decision_values<D: Design>(model: &LinearModel, design: &D) -> Result<Vec<f64>> {
    check_dim(model.w.len(), design.n_cols())?;
    Ok((0..design.n_rows())
        .map(|i| design.row_dot(i, &model.w) + model.b)
        .collect())
}

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores count
/// one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_dim(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = labels.iter().filter(|&&y| y > 0.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels("AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of mid-ranks of the positives
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let mid_rank = (start + end + 1) as f64 / 2.0;
        let tied_pos = idx[start..end].iter().filter(|&&i| labels[i] > 0.0).count();
        rank_sum += mid_rank * tied_pos as f64;
        start = end;
    }
    let (pos, neg) = (pos as f64, neg as f64);
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}
