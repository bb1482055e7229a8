//! Learning the target quantile jointly with a linear model.
//!
//! With every sample represented by its permutation matrix `P_i`, a linear
//! model on quantile-normalized data scores `w^T P_i f + b = <w f^T, P_i> + b`:
//! a rank-one matrix model over permutation matrices. Three learners:
//!
//! * **SVD**: the top right singular vector of the class-mean difference
//!   `M = mean_{+}(P_i) - mean_{-}(P_i)`, found by power iteration using only
//!   `O(p)` permutation products per sample.
//! * **BND**: alternate a ridge/logistic fit in `(w, b)` with an accelerated
//!   projected-gradient fit of `f` over non-decreasing, centered vectors with
//!   `mean(f^2) <= 1`.
//! * **SPAV**: as BND, but the `f` problem is penalized by
//!   `gamma * sum (f[j+1] - f[j])^2` and solved with the smoothed isotonic
//!   prox.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::isotonic::{pava_unchecked, roughness, spav_prox_unchecked};
use crate::linmod::{
    dot, fit_linear, fit_linear_from, LinearModel, LossKind, LossSpec, QuantileDesign,
};
use crate::optim::{self, Prox, Settings, Smooth};
use crate::perm::SortedSample;
use crate::quantiles::{center_in_place, project_f0, project_fbnd, project_fbnd_in_place, TargetQuantile};

/// `M = sum_i c_i P_i` with `c_i = y_i / n_{y_i}`, kept as its samples.
#[derive(Debug, Clone)]
pub struct ImplicitLdaMatrix<'a> {
    samples: &'a [SortedSample],
    coefficients: Vec<f64>,
    p: usize,
}

impl<'a> ImplicitLdaMatrix<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self> {
        let (pos, neg) = data.require_binary()?;
        let coefficients = data
            .labels()
            .iter()
            .map(|&y| if y > 0.0 { 1.0 / pos as f64 } else { -1.0 / neg as f64 })
            .collect();
        Ok(Self {
            samples: data.sorted(),
            coefficients,
            p: data.p(),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (s, &c) in self.samples.iter().zip(&self.coefficients) {
            s.add_pi(c, v, out);
        }
    }

    fn matvec_transpose_into(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (s, &c) in self.samples.iter().zip(&self.coefficients) {
            s.add_pi_transpose(c, u, out);
        }
    }

    /// Row-major `p x p` accumulation of `M`.
    pub fn to_dense(&self) -> Vec<f64> {
        let p = self.p;
        let mut m = vec![0.0; p * p];
        for (s, &c) in self.samples.iter().zip(&self.coefficients) {
            for (j, &r) in s.rank().iter().enumerate() {
                m[j * p + r] += c;
            }
        }
        m
    }
}

/// `M v` in `O(np)`.
pub fn lda_matvec(m: &ImplicitLdaMatrix<'_>, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(m.p, v.len())?;
    let mut out = vec![0.0; m.p];
    m.matvec_into(v, &mut out);
    Ok(out)
}

/// `M^T u` in `O(np)`.
pub fn lda_matvec_transpose(m: &ImplicitLdaMatrix<'_>, u: &[f64]) -> Result<Vec<f64>> {
    check_dim(m.p, u.len())?;
    let mut out = vec![0.0; m.p];
    m.matvec_transpose_into(u, &mut out);
    Ok(out)
}

/// How `M^T M v` is evaluated during power iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvdPath {
    /// Implicit when `n p < p^2`, dense otherwise.
    #[default]
    Auto,
    Implicit,
    Dense,
}

#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    /// Stop when successive unit iterates differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub path: SvdPath,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            path: SvdPath::Auto,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvdOutcome {
    pub quantile: TargetQuantile,
    /// Leading singular value of `M`.
    pub sigma: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Rayleigh quotient `||M v_k||^2` at each iterate.
    pub rayleigh: Vec<f64>,
    pub used_dense: bool,
}

/// Learned quantile of the SVD learner with default options.
pub fn suquan_svd(data: &Dataset) -> Result<TargetQuantile> {
    suquan_svd_with(data, &SvdOptions::default()).map(|o| o.quantile)
}

pub fn suquan_svd_with(data: &Dataset, opts: &SvdOptions) -> Result<SvdOutcome> {
    let m = ImplicitLdaMatrix::new(data)?;
    let p = m.p;
    let n = m.n();
    let use_dense = match opts.path {
        SvdPath::Auto => n.saturating_mul(p) >= p.saturating_mul(p),
        SvdPath::Implicit => false,
        SvdPath::Dense => true,
    };
    let dense = use_dense.then(|| m.to_dense());

    let mut mv = vec![0.0; p];
    let mut next = vec![0.0; p];
    // v -> (M v, M^T M v); returns ||M v||^2
    let apply = |v: &[f64], mv: &mut [f64], out: &mut [f64]| -> f64 {
        match &dense {
            Some(d) => {
                for (j, o) in mv.iter_mut().enumerate() {
                    *o = dot(&d[j * p..(j + 1) * p], v);
                }
                out.iter_mut().for_each(|o| *o = 0.0);
                for (j, &a) in mv.iter().enumerate() {
                    for (o, x) in out.iter_mut().zip(&d[j * p..(j + 1) * p]) {
                        *o += a * x;
                    }
                }
            }
            None => {
                m.matvec_into(v, mv);
                m.matvec_transpose_into(mv, out);
            }
        }
        dot(mv, mv)
    };

    let mut v = None;
    for start in start_vectors(p) {
        let rq = apply(&start, &mut mv, &mut next);
        if rq > SIGMA_FLOOR {
            v = Some(start);
            break;
        }
    }
    let mut v = v.ok_or_else(|| {
        Error::DegenerateQuantile("class-mean difference of permutation matrices is zero".into())
    })?;

    let mut rayleigh = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let rq = apply(&v, &mut mv, &mut next);
        rayleigh.push(rq);
        let norm = dot(&next, &next).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::numeric("power iteration collapsed"));
        }
        let mut delta = 0.0;
        for (vi, ni) in v.iter_mut().zip(&next) {
            let u = ni / norm;
            delta += (u - *vi).powi(2);
            *vi = u;
        }
        if delta.sqrt() < opts.tol {
            converged = true;
            rayleigh.push(apply(&v, &mut mv, &mut next));
            break;
        }
    }
    let sigma2 = *rayleigh.last().expect("at least one iteration");
    if sigma2 <= SIGMA_FLOOR {
        return Err(Error::DegenerateQuantile(
            "leading singular value of the class-mean difference is zero".into(),
        ));
    }
    let oscillating = rayleigh
        .windows(2)
        .any(|w| w[1] < w[0] * (1.0 - 1e-9));
    if !converged || oscillating {
        log::warn!(
            "power iteration for the SVD quantile did not settle after {iterations} iterations \
             (near-degenerate leading singular values); the quantile may be unstable"
        );
    }
    fix_sign(&mut v);
    let quantile = project_f0(&v)?;
    Ok(SvdOutcome {
        quantile,
        sigma: sigma2.sqrt(),
        iterations,
        converged,
        rayleigh,
        used_dense: use_dense,
    })
}

const SIGMA_FLOOR: f64 = 1e-20;

/// Centered index ramp plus a quasi-random component, then each of the two
/// alone. The ramp by itself can be exactly orthogonal to the leading singular
/// vector when p is small, since `M` has entries on a lattice.
fn start_vectors(p: usize) -> Vec<Vec<f64>> {
    let unit = |mut v: Vec<f64>| -> Option<Vec<f64>> {
        center_in_place(&mut v);
        let norm = dot(&v, &v).sqrt();
        (norm > 0.0).then(|| {
            v.iter_mut().for_each(|x| *x /= norm);
            v
        })
    };
    let ramp = unit((1..=p).map(|j| j as f64).collect());
    let other = unit(
        (0..p)
            .map(|j| ((j as f64 + 1.0) * 0.754_877_666_246_692_7).fract() - 0.5)
            .collect(),
    );
    let mixed = match (&ramp, &other) {
        (Some(a), Some(b)) => unit(a.iter().zip(b).map(|(x, y)| x + y).collect()),
        _ => None,
    };
    [mixed, ramp, other].into_iter().flatten().collect()
}

/// Orients `v` to correlate non-negatively with the index sequence; on an
/// exact tie the first non-zero entry is made non-negative.
fn fix_sign(v: &mut [f64]) {
    let mid = (v.len() as f64 - 1.0) / 2.0;
    let corr: f64 = v.iter().enumerate().map(|(j, x)| x * (j as f64 - mid)).sum();
    let flip = if corr != 0.0 {
        corr < 0.0
    } else {
        v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Which constraint set the alternating learner uses for `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Svd,
    Bnd,
    Spav,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Svd => "svd",
            Variant::Bnd => "bnd",
            Variant::Spav => "spav",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svd" => Ok(Variant::Svd),
            "bnd" => Ok(Variant::Bnd),
            "spav" => Ok(Variant::Spav),
            other => Err(Error::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Monitored objective after every half-step, starting with the first
    /// w-step.
    pub objective_trace: Vec<f64>,
    pub w_iterations: Vec<usize>,
    pub f_iterations: Vec<usize>,
    pub converged: bool,
}

/// A learned quantile and the linear model that goes with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuquanModel {
    pub quantile: TargetQuantile,
    pub model: LinearModel,
    pub variant: Variant,
    pub gamma: f64,
    pub rounds: usize,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy)]
pub struct AltOptions {
    pub variant: Variant,
    pub lambda: f64,
    /// Smoothness weight; only read by [`Variant::Spav`].
    pub gamma: f64,
    pub rounds: usize,
    pub loss: LossKind,
}

impl AltOptions {
    pub fn bnd(lambda: f64) -> Self {
        Self {
            variant: Variant::Bnd,
            lambda,
            gamma: 0.0,
            rounds: 1,
            loss: LossKind::Logistic,
        }
    }

    pub fn spav(lambda: f64, gamma: f64) -> Self {
        Self {
            variant: Variant::Spav,
            gamma,
            ..Self::bnd(lambda)
        }
    }
}

pub const F_STEP_MAX_ITER: usize = 2000;
pub const F_STEP_REL_TOL: f64 = 1e-8;

/// The f-step loss `(1/n) sum_i loss_i(f^T w[order_i] + b)` and its gradient
/// `(1/n) sum_i loss_i'(.) w[order_i]`.
pub fn f_step_objective_grad(
    samples: &[SortedSample],
    spec: &LossSpec,
    w: &[f64],
    b: f64,
    f: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_dim(samples.len(), spec.len())?;
    check_dim(w.len(), f.len())?;
    for s in samples {
        check_dim(f.len(), s.len())?;
    }
    let problem = FStep {
        samples,
        spec,
        w,
        b,
    };
    let mut grad = vec![0.0; f.len()];
    let value = problem.value_grad(f, &mut grad);
    Ok((value, grad))
}

struct FStep<'a> {
    samples: &'a [SortedSample],
    spec: &'a LossSpec,
    w: &'a [f64],
    b: f64,
}

impl FStep<'_> {
    fn margins(&self, f: &[f64]) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.bilinear(self.w, f) + self.b)
            .collect()
    }
}

impl Smooth for FStep<'_> {
    fn dim(&self) -> usize {
        self.w.len()
    }

    fn value_grad(&self, f: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.samples.len() as f64;
        let margins = self.margins(f);
        let mut deriv = vec![0.0; margins.len()];
        let value = self.spec.eval_into(&margins, &mut deriv);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (s, d) in self.samples.iter().zip(&deriv) {
            s.add_pi_transpose(d / n, self.w, grad);
        }
        value
    }

    fn value(&self, f: &[f64]) -> f64 {
        self.spec.eval(&self.margins(f))
    }
}

struct BndProx;

impl Prox for BndProx {
    fn prox(&self, z: &mut [f64], _step: f64) {
        project_fbnd_in_place(z);
    }
    fn value(&self, _f: &[f64]) -> f64 {
        0.0
    }
}

struct SpavProx {
    gamma: f64,
}

impl Prox for SpavProx {
    fn prox(&self, z: &mut [f64], step: f64) {
        let out = spav_prox_unchecked(z, self.gamma * step);
        z.copy_from_slice(&out);
    }
    fn value(&self, f: &[f64]) -> f64 {
        self.gamma * roughness(f)
    }
}

/// Upper bound on `F(f) - min F` over the BND set, from convexity: the set is
/// a cone intersected with a ball of radius `sqrt(p)`, so the linear minimum
/// of `g` over it is `-sqrt(p) ||proj_cone(-g)||`.
fn bnd_gap(f: &[f64], grad: &[f64]) -> f64 {
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut cone = pava_unchecked(&neg);
    center_in_place(&mut cone);
    let radius = (f.len() as f64).sqrt();
    dot(grad, f) + radius * dot(&cone, &cone).sqrt()
}

/// Outcome of one f-step.
struct FStepResult {
    f: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn f_step(
    data: &Dataset,
    spec: &LossSpec,
    model: &LinearModel,
    f: Vec<f64>,
    variant: Variant,
    gamma: f64,
) -> FStepResult {
    let problem = FStep {
        samples: data.sorted(),
        spec,
        w: &model.w,
        b: model.b,
    };
    let p = f.len();
    let n = data.n();

    if variant == Variant::Bnd {
        let mut grad = vec![0.0; p];
        let value = problem.value_grad(&f, &mut grad);
        if bnd_gap(&f, &grad) <= F_STEP_REL_TOL * value.abs() {
            return FStepResult {
                f,
                iterations: 0,
                converged: true,
            };
        }
    }

    // top eigenvalue of U^T U / n, rows u_i = w[order_i]
    let sigma = optim::power_estimate(p, 15, |v, out| {
        for s in data.sorted() {
            let a = s.bilinear(&model.w, v) / n as f64;
            s.add_pi_transpose(a, &model.w, out);
        }
    });
    let lipschitz = (spec.kind().curvature() * sigma).max(1e-12);
    let settings = Settings {
        max_iter: F_STEP_MAX_ITER,
        rel_tol: F_STEP_REL_TOL,
        grad_tol: 0.0,
    };
    let out = match variant {
        Variant::Spav => optim::minimize(&problem, &SpavProx { gamma }, f, vec![lipschitz; p], settings),
        _ => optim::minimize(&problem, &BndProx, f, vec![lipschitz; p], settings),
    };
    FStepResult {
        f: out.x,
        iterations: out.iterations,
        converged: out.converged,
    }
}

/// The monitored objective: penalized loss, plus the smoothness penalty for
/// SPAV.
pub fn joint_objective(
    data: &Dataset,
    spec: &LossSpec,
    model: &LinearModel,
    f: &[f64],
    variant: Variant,
    gamma: f64,
) -> Result<f64> {
    let design = QuantileDesign::new(data.sorted(), f)?;
    let (value, _, _) =
        crate::linmod::objective_value_grad(&design, spec, model.lambda, &model.w, model.b)?;
    Ok(match variant {
        Variant::Spav => value + gamma * roughness(f),
        _ => value,
    })
}

/// Alternating optimization in `(w, b)` and `f` (BND or SPAV).
///
/// Each round runs a w-step (a linear fit on the data normalized onto the
/// current `f`) followed by an f-step with `(w, b)` fixed. The first w-step
/// starts from zero, later ones from the previous model. The returned model is
/// the final joint iterate.
pub fn suquan_alt(data: &Dataset, f_init: &TargetQuantile, opts: &AltOptions) -> Result<SuquanModel> {
    let mut run = AltRun::start(data, f_init, opts)?;
    for round in 0..opts.rounds {
        if round > 0 {
            run.w_step()?;
        }
        run.f_step(opts.variant, opts.gamma)?;
    }
    run.finish(opts)
}

/// State of an alternating run. Split out so that a grid over `gamma` can
/// share the first w-step, which does not depend on `gamma`.
#[derive(Debug, Clone)]
pub(crate) struct AltRun<'a> {
    data: &'a Dataset,
    spec: LossSpec,
    f: Vec<f64>,
    model: LinearModel,
    variant: Variant,
    gamma: f64,
    diagnostics: Diagnostics,
}

impl<'a> AltRun<'a> {
    /// Validates inputs, prepares the starting quantile and runs the first
    /// w-step.
    pub(crate) fn start(data: &'a Dataset, f_init: &TargetQuantile, opts: &AltOptions) -> Result<Self> {
        check_dim(data.p(), f_init.len())?;
        if opts.variant == Variant::Svd {
            return Err(Error::invalid("the SVD learner is not an alternating method"));
        }
        if !f_init.is_monotone() {
            return Err(Error::invalid("initial quantile must be non-decreasing"));
        }
        if opts.rounds == 0 {
            return Err(Error::invalid("at least one round is required"));
        }
        if !(opts.gamma >= 0.0 && opts.gamma.is_finite()) {
            return Err(Error::invalid("gamma must be finite and >= 0"));
        }
        if opts.loss == LossKind::Logistic {
            data.require_binary()?;
        }
        let spec = LossSpec::new(opts.loss, data.labels().to_vec())?;
        let f = match opts.variant {
            Variant::Bnd => project_fbnd(f_init.values())?.into_values(),
            _ => {
                // centering only; project_f0 rejects a constant start
                project_f0(f_init.values())?;
                let mut v = f_init.values().to_vec();
                center_in_place(&mut v);
                v
            }
        };
        let design = QuantileDesign::new(data.sorted(), &f)?;
        let fit = fit_linear(&design, &spec, opts.lambda)?;
        let mut run = Self {
            data,
            spec,
            f,
            model: fit.model,
            variant: opts.variant,
            gamma: opts.gamma,
            diagnostics: Diagnostics::default(),
        };
        run.diagnostics.w_iterations.push(fit.iterations);
        run.diagnostics.converged = fit.converged;
        run.record()?;
        Ok(run)
    }

    /// Copy of a freshly started run with a different smoothness weight.
    pub(crate) fn fork(&self, gamma: f64) -> Result<Self> {
        debug_assert_eq!(self.diagnostics.objective_trace.len(), 1);
        let mut run = self.clone();
        run.gamma = gamma;
        run.diagnostics.objective_trace.clear();
        run.record()?;
        Ok(run)
    }

    fn record(&mut self) -> Result<()> {
        let value = joint_objective(
            self.data,
            &self.spec,
            &self.model,
            &self.f,
            self.variant,
            self.gamma,
        )?;
        if !value.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite objective after half-step {}",
                self.diagnostics.objective_trace.len() + 1
            )));
        }
        self.diagnostics.objective_trace.push(value);
        Ok(())
    }

    pub(crate) fn w_step(&mut self) -> Result<()> {
        let design = QuantileDesign::new(self.data.sorted(), &self.f)?;
        let fit = fit_linear_from(&design, &self.spec, self.model.lambda, &self.model)?;
        self.model = fit.model;
        self.diagnostics.w_iterations.push(fit.iterations);
        self.diagnostics.converged &= fit.converged;
        self.record()
    }

    /// Runs an f-step with the given smoothness weight (SPAV) or projection
    /// (BND).
    pub(crate) fn f_step(&mut self, variant: Variant, gamma: f64) -> Result<()> {
        self.variant = variant;
        self.gamma = gamma;
        let res = f_step(
            self.data,
            &self.spec,
            &self.model,
            std::mem::take(&mut self.f),
            variant,
            gamma,
        );
        if res.f.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite quantile in f-step {} after {} iterations",
                self.diagnostics.f_iterations.len() + 1,
                res.iterations
            )));
        }
        self.f = res.f;
        if variant == Variant::Spav {
            // move the constant into the intercept; margins are unchanged
            let mean = center_in_place(&mut self.f);
            self.model.b += mean * self.model.w.iter().sum::<f64>();
        }
        self.diagnostics.f_iterations.push(res.iterations);
        self.diagnostics.converged &= res.converged;
        self.record()
    }

    pub(crate) fn finish(self, opts: &AltOptions) -> Result<SuquanModel> {
        let scale = self.f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale <= 1e-300 {
            return Err(Error::DegenerateQuantile(
                "learned quantile collapsed to a constant".into(),
            ));
        }
        let quantile = TargetQuantile::new(self.f)?;
        Ok(SuquanModel {
            quantile,
            model: self.model,
            variant: self.variant,
            gamma: if self.variant == Variant::Spav { self.gamma } else { 0.0 },
            rounds: opts.rounds,
            diagnostics: self.diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantiles::{make_distribution_quantile, QuantileFamily};

    fn tiny() -> Dataset {
        Dataset::from_rows(
            "tiny",
            &[
                vec![0.1, 0.5, 0.3, 0.9],
                vec![1.0, 0.2, 0.4, 0.8],
                vec![0.6, 0.7, 0.1, 0.2],
            ],
            vec![1.0, -1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn lda_matvec_matches_dense() {
        let d = tiny();
        let m = ImplicitLdaMatrix::new(&d).unwrap();
        let dense = m.to_dense();
        let v = [0.3, -1.0, 2.0, 0.5];
        let mv = lda_matvec(&m, &v).unwrap();
        let mtv = lda_matvec_transpose(&m, &v).unwrap();
        for j in 0..4 {
            let row: f64 = (0..4).map(|k| dense[j * 4 + k] * v[k]).sum();
            let col: f64 = (0..4).map(|k| dense[k * 4 + j] * v[k]).sum();
            assert!((row - mv[j]).abs() < 1e-15);
            assert!((col - mtv[j]).abs() < 1e-15);
        }
        let ones = lda_matvec(&m, &[1.0; 4]).unwrap();
        assert!(ones.iter().all(|x| x.abs() < 1e-15));
        assert!(lda_matvec(&m, &[1.0; 3]).is_err());
    }

    #[test]
    fn coefficient_sums() {
        let d = tiny();
        let m = ImplicitLdaMatrix::new(&d).unwrap();
        let pos: f64 = m.coefficients().iter().filter(|c| **c > 0.0).sum();
        let neg: f64 = m.coefficients().iter().filter(|c| **c < 0.0).sum();
        assert!((pos - 1.0).abs() < 1e-15 && (neg + 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_permutations_cancel() {
        let d = Dataset::from_rows(
            "same",
            &[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]],
            vec![1.0, -1.0],
        )
        .unwrap();
        let m = ImplicitLdaMatrix::new(&d).unwrap();
        assert!(lda_matvec(&m, &[1.0, -2.0, 5.0]).unwrap().iter().all(|x| *x == 0.0));
        assert!(matches!(suquan_svd(&d), Err(Error::DegenerateQuantile(_))));
    }

    #[test]
    fn svd_rejects_single_class() {
        let d = Dataset::from_rows("one", &[vec![1.0, 2.0], vec![2.0, 1.0]], vec![1.0, 1.0]).unwrap();
        assert!(matches!(suquan_svd(&d), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.5, 0.0, -0.5];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.5, 0.0, 0.5]);
        let mut v = vec![-0.5, 1.0, -0.5];
        fix_sign(&mut v);
        assert_eq!(v, vec![0.5, -1.0, 0.5]);
    }

    #[test]
    fn alt_rejects_bad_inputs() {
        let d = tiny();
        let f = TargetQuantile::new(vec![3.0, 1.0, 2.0, 0.0]).unwrap();
        assert!(suquan_alt(&d, &f, &AltOptions::bnd(1.0)).is_err());
        let flat = TargetQuantile::new(vec![1.0; 4]).unwrap();
        assert!(matches!(
            suquan_alt(&d, &flat, &AltOptions::bnd(1.0)),
            Err(Error::DegenerateQuantile(_))
        ));
        let g = make_distribution_quantile(QuantileFamily::Gaussian, 4).unwrap();
        let mut opts = AltOptions::bnd(1.0);
        opts.rounds = 0;
        assert!(suquan_alt(&d, &g, &opts).is_err());
        let one = Dataset::from_rows("one", &[vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 1.0, 3.0, 4.0]], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            suquan_alt(&one, &g, &AltOptions::bnd(1.0)),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn bnd_output_is_feasible() {
        let d = tiny();
        let g = make_distribution_quantile(QuantileFamily::Exponential, 4).unwrap();
        let model = suquan_alt(&d, &g, &AltOptions::bnd(0.01)).unwrap();
        let f = &model.quantile;
        assert!(f.is_monotone() && f.is_centered());
        assert!(f.rms() <= 1.0 + 1e-12);
        assert_eq!(model.diagnostics.objective_trace.len(), 2);
    }
}
