//! Isotonic and smoothed-isotonic proximal operators.
//!
//! * [`pava`] solves `min_f 0.5 ||f - v||^2` over non-decreasing `f` in `O(p)`.
//! * [`spav_prox`] adds the smoothness penalty `gamma * sum_j (f[j+1] - f[j])^2`
//!   and is solved by a primal active-set method over the monotonicity
//!   constraints, warm-started from the PAVA block structure.
//! * [`qp_oracle_prox`] solves the same program by brute-force enumeration of
//!   tight-constraint patterns. It exists to check the two fast routes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`qp_oracle_prox`].
pub const ORACLE_MAX_P: usize = 12;

/// A smoothed-isotonic proximal problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxProblem {
    pub target: Vec<f64>,
    /// Weight of the squared-differences penalty; 0 gives plain isotonic
    /// regression.
    pub gamma: f64,
}

impl ProxProblem {
    pub fn new(target: Vec<f64>, gamma: f64) -> Result<Self> {
        validate(&target, gamma)?;
        Ok(Self { target, gamma })
    }

    /// `0.5 ||f - target||^2 + gamma * sum (f[j+1] - f[j])^2`.
    pub fn objective(&self, f: &[f64]) -> f64 {
        let fit: f64 = f
            .iter()
            .zip(&self.target)
            .map(|(a, b)| 0.5 * (a - b).powi(2))
            .sum();
        fit + self.gamma * roughness(f)
    }
}

fn validate(v: &[f64], gamma: f64) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite entry in prox target"));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "smoothness weight must be finite and >= 0, got {gamma}"
        )));
    }
    Ok(())
}

/// `sum_j (f[j+1] - f[j])^2`.
pub fn roughness(f: &[f64]) -> f64 {
    f.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

/// Total variation `sum_j |f[j+1] - f[j]|`.
pub fn total_variation(f: &[f64]) -> f64 {
    f.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Euclidean projection onto the cone of non-decreasing vectors.
pub fn pava(v: &[f64]) -> Result<Vec<f64>> {
    validate(v, 0.0)?;
    Ok(pava_unchecked(v))
}

pub(crate) fn pava_unchecked(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    for (start, len, mean) in pava_blocks(v) {
        debug_assert_eq!(out.len(), start);
        out.extend(std::iter::repeat_n(mean, len));
    }
    out
}

/// Pooled blocks as `(start, len, mean)`.
fn pava_blocks(v: &[f64]) -> Vec<(usize, usize, f64)> {
    // (sum, len) per block on a stack
    let mut stack: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        let mut sum = x;
        let mut len = 1usize;
        while let Some(&(s, l)) = stack.last() {
            // previous mean > current mean  <=>  s * len > sum * l
            if s * len as f64 > sum * l as f64 {
                sum += s;
                len += l;
                stack.pop();
            } else {
                break;
            }
        }
        stack.push((sum, len));
    }
    let mut start = 0;
    stack
        .into_iter()
        .map(|(s, l)| {
            let b = (start, l, s / l as f64);
            start += l;
            b
        })
        .collect()
}

/// Proximal operator of `gamma * sum (f[j+1]-f[j])^2` restricted to
/// non-decreasing vectors, evaluated at `v`.
pub fn spav_prox(v: &[f64], gamma: f64) -> Result<Vec<f64>> {
    validate(v, gamma)?;
    Ok(spav_prox_unchecked(v, gamma))
}

pub(crate) fn spav_prox_unchecked(v: &[f64], gamma: f64) -> Vec<f64> {
    let p = v.len();
    if gamma == 0.0 || p < 2 {
        return pava_unchecked(v);
    }
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-13 * scale * (1.0 + gamma);

    // tight[j]: constraint f[j] == f[j+1] is in the working set
    let mut tight = vec![false; p - 1];
    for (start, len, _) in pava_blocks(v) {
        for t in &mut tight[start..start + len - 1] {
            *t = true;
        }
    }
    // PAVA output is feasible; it is the starting point.
    let mut f = pava_unchecked(v);
    let mut candidate = vec![0.0; p];

    // Each constraint can enter and leave the working set; the objective
    // strictly decreases between repeated working sets, so this is a generous
    // safety bound rather than an expected count.
    let max_iter = 10 * p * p + 100;
    for _ in 0..max_iter {
        solve_blocks(v, gamma, &tight, &mut candidate);

        // blocking constraint along f -> candidate
        let mut alpha = 1.0;
        let mut blocking = None;
        for j in 0..p - 1 {
            if tight[j] {
                continue;
            }
            let cand_gap = candidate[j + 1] - candidate[j];
            if cand_gap < -tol {
                let cur_gap = f[j + 1] - f[j];
                let a = (cur_gap / (cur_gap - cand_gap)).clamp(0.0, 1.0);
                if a < alpha {
                    alpha = a;
                    blocking = Some(j);
                }
            }
        }

        match blocking {
            Some(j) => {
                for (fi, ci) in f.iter_mut().zip(&candidate) {
                    *fi += alpha * (ci - *fi);
                }
                tight[j] = true;
            }
            None => {
                f.copy_from_slice(&candidate);
                // multipliers mu[j] = -sum_{i<=j} grad_i on tight constraints
                let mut worst = -tol;
                let mut release = None;
                let mut cum = 0.0;
                for j in 0..p - 1 {
                    cum += smooth_grad(v, &f, gamma, j);
                    if tight[j] && -cum < worst {
                        worst = -cum;
                        release = Some(j);
                    }
                }
                match release {
                    Some(j) => tight[j] = false,
                    None => break,
                }
            }
        }
    }
    enforce_monotone(&mut f);
    f
}

/// Partial derivative of `0.5||f - v||^2 + gamma * roughness(f)` at `j`.
fn smooth_grad(v: &[f64], f: &[f64], gamma: f64, j: usize) -> f64 {
    let p = f.len();
    let mut g = f[j] - v[j];
    if j > 0 {
        g += 2.0 * gamma * (f[j] - f[j - 1]);
    }
    if j + 1 < p {
        g -= 2.0 * gamma * (f[j + 1] - f[j]);
    }
    g
}

/// Minimizes the smoothed objective with every tight constraint as an
/// equality: block values solve a symmetric tridiagonal system.
fn solve_blocks(v: &[f64], gamma: f64, tight: &[bool], out: &mut [f64]) {
    let mut counts = Vec::new();
    let mut sums = Vec::new();
    let (mut n, mut s) = (0usize, 0.0);
    for (j, &x) in v.iter().enumerate() {
        n += 1;
        s += x;
        if j == v.len() - 1 || !tight[j] {
            counts.push(n as f64);
            sums.push(s);
            n = 0;
            s = 0.0;
        }
    }
    let k = counts.len();
    let c = 2.0 * gamma;
    let diag: Vec<f64> = (0..k)
        .map(|i| {
            let neighbours = (i > 0) as usize + (i + 1 < k) as usize;
            counts[i] + c * neighbours as f64
        })
        .collect();
    let values = thomas(&diag, -c, &sums);
    let mut j = 0;
    for (value, count) in values.iter().zip(&counts) {
        for o in &mut out[j..j + *count as usize] {
            *o = *value;
        }
        j += *count as usize;
    }
}

/// Solves a symmetric tridiagonal system with constant off-diagonal.
/// The systems here are strictly diagonally dominant, so no pivoting.
fn thomas(diag: &[f64], off: f64, rhs: &[f64]) -> Vec<f64> {
    let k = diag.len();
    let mut c_prime = vec![0.0; k];
    let mut d_prime = vec![0.0; k];
    c_prime[0] = off / diag[0];
    d_prime[0] = rhs[0] / diag[0];
    for i in 1..k {
        let m = diag[i] - off * c_prime[i - 1];
        c_prime[i] = off / m;
        d_prime[i] = (rhs[i] - off * d_prime[i - 1]) / m;
    }
    let mut x = vec![0.0; k];
    x[k - 1] = d_prime[k - 1];
    for i in (0..k - 1).rev() {
        x[i] = d_prime[i] - c_prime[i] * x[i + 1];
    }
    x
}

/// Removes round-off sized decreases left by the active-set iteration.
fn enforce_monotone(f: &mut [f64]) {
    for j in 1..f.len() {
        if f[j] < f[j - 1] {
            f[j] = f[j - 1];
        }
    }
}

/// Brute-force solver for [`ProxProblem`]: every subset of the `p - 1`
/// monotonicity constraints is tried as an equality pattern, the resulting
/// linear system is solved densely, and the best feasible candidate is kept.
///
/// Exponential in `p`; intended for tests only.
pub fn qp_oracle_prox(problem: &ProxProblem) -> Result<Vec<f64>> {
    let p = problem.target.len();
    if p > ORACLE_MAX_P {
        return Err(Error::OracleTooLarge {
            p,
            max: ORACLE_MAX_P,
        });
    }
    validate(&problem.target, problem.gamma)?;
    if p == 0 {
        return Ok(Vec::new());
    }
    let scale = problem.target.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let feas_tol = 1e-11 * scale;

    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1u32 << (p - 1)) {
        let f = oracle_pattern(problem, mask);
        if f.windows(2).any(|w| w[1] < w[0] - feas_tol) {
            continue;
        }
        let obj = problem.objective(&f);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, f));
        }
    }
    // the all-tight pattern is always feasible
    Ok(best.expect("constant pattern is feasible").1)
}

/// Solves the equality-constrained problem where bit `j` of `mask` fixes
/// `f[j] == f[j+1]`, via `f = B g` and the dense normal equations in `g`.
fn oracle_pattern(problem: &ProxProblem, mask: u32) -> Vec<f64> {
    let v = &problem.target;
    let p = v.len();
    let mut block_of = vec![0usize; p];
    for j in 1..p {
        block_of[j] = block_of[j - 1] + usize::from(mask & (1 << (j - 1)) == 0);
    }
    let k = block_of[p - 1] + 1;

    // Hessian in f: I + 2 gamma D^T D, with D the first-difference matrix.
    let mut hf = vec![vec![0.0; p]; p];
    for (j, row) in hf.iter_mut().enumerate() {
        row[j] = 1.0;
    }
    for j in 0..p - 1 {
        let c = 2.0 * problem.gamma;
        hf[j][j] += c;
        hf[j + 1][j + 1] += c;
        hf[j][j + 1] -= c;
        hf[j + 1][j] -= c;
    }
    // B^T H B and B^T v
    let mut a = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for i in 0..p {
        rhs[block_of[i]] += v[i];
        for j in 0..p {
            a[block_of[i]][block_of[j]] += hf[i][j];
        }
    }
    let g = gauss_solve(a, rhs);
    (0..p).map(|i| g[block_of[i]]).collect()
}

/// Dense Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for c in col..n {
                    a[row][c] -= factor * a[col][c];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pava_feasible_input_unchanged() {
        let v = [-1.0, 0.0, 0.0, 2.5, 3.0];
        assert_eq!(pava(&v).unwrap(), v.to_vec());
    }

    #[test]
    fn pava_pools_violators() {
        assert_eq!(pava(&[3.0, 1.0, 2.0]).unwrap(), vec![2.0, 2.0, 2.0]);
        assert_eq!(pava(&[1.0, 3.0, 2.0, 4.0]).unwrap(), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(pava(&[2.0, 1.0]).unwrap(), vec![1.5, 1.5]);
    }

    #[test]
    fn spav_gamma_zero_is_pava() {
        let v = [0.3, -2.0, 1.0, 0.9, 5.0, 4.0];
        assert_eq!(spav_prox(&v, 0.0).unwrap(), pava(&v).unwrap());
    }

    #[test]
    fn spav_two_point_closed_form() {
        let f = spav_prox(&[0.0, 10.0], 1.0).unwrap();
        assert_abs_diff_eq!(f[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_small_cases() {
        let pb = ProxProblem::new(vec![3.0, 1.0, 2.0], 0.0).unwrap();
        let f = qp_oracle_prox(&pb).unwrap();
        for x in f {
            assert_abs_diff_eq!(x, 2.0, epsilon = 1e-12);
        }
        let pb = ProxProblem::new(vec![0.0, 10.0], 1.0).unwrap();
        let f = qp_oracle_prox(&pb).unwrap();
        assert_abs_diff_eq!(f[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], 6.0, epsilon = 1e-12);
        let pb = ProxProblem::new(vec![-1.0, 0.5, 2.0], 0.0).unwrap();
        assert_eq!(qp_oracle_prox(&pb).unwrap(), vec![-1.0, 0.5, 2.0]);
    }

    #[test]
    fn oracle_rejects_large_p() {
        let pb = ProxProblem::new(vec![0.0; ORACLE_MAX_P + 1], 1.0).unwrap();
        assert!(matches!(
            qp_oracle_prox(&pb),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn invalid_inputs() {
        assert!(pava(&[f64::NAN]).is_err());
        assert!(spav_prox(&[1.0], -1.0).is_err());
        assert!(spav_prox(&[1.0], f64::INFINITY).is_err());
        assert!(ProxProblem::new(vec![1.0], -0.5).is_err());
    }

    #[test]
    fn empty_and_singleton() {
        assert!(pava(&[]).unwrap().is_empty());
        assert_eq!(spav_prox(&[4.0], 3.0).unwrap(), vec![4.0]);
    }

    #[test]
    fn decreasing_input_with_smoothing_is_constant_mean() {
        let v = [5.0, 4.0, 3.0, 2.0, 1.0];
        let f = spav_prox(&v, 10.0).unwrap();
        for x in f {
            assert_abs_diff_eq!(x, 3.0, epsilon = 1e-12);
        }
    }
}
