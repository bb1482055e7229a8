//! Target quantiles and quantile normalization.
//!
//! A target quantile is a length-`p` vector `f`. Normalizing a sample `x` onto
//! it gives the smallest entry of `x` the value `f[0]`, the second smallest
//! `f[1]`, and so on.
//!
//! Learned quantiles are constrained to centered vectors whose mean square
//! is at most 1 ([`project_f0`]), optionally also non-decreasing
//! ([`project_fbnd`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::isotonic::pava_unchecked;
use crate::perm::{apply_pi, sort_sample};

/// A target quantile with certified structural flags.
///
/// The flags are computed from the values at construction, so they can be
/// trusted by every consumer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TargetQuantile {
    values: Vec<f64>,
    monotone: bool,
    centered: bool,
}

impl TargetQuantile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty quantile"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite quantile value"));
        }
        let monotone = values.windows(2).all(|w| w[0] <= w[1]);
        let centered = is_centered(&values);
        Ok(Self {
            values,
            monotone,
            centered,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values are non-decreasing.
    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Values sum to zero up to round-off.
    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// `sqrt(mean(f_j^2))`.
    pub fn rms(&self) -> f64 {
        rms(&self.values)
    }
}

impl TryFrom<Vec<f64>> for TargetQuantile {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<TargetQuantile> for Vec<f64> {
    fn from(q: TargetQuantile) -> Self {
        q.values
    }
}

fn is_centered(values: &[f64]) -> bool {
    let p = values.len() as f64;
    let max_abs = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    values.iter().sum::<f64>().abs() <= 1e-9 * p * max_abs
}

pub(crate) fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

pub(crate) fn center_in_place(values: &mut [f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for v in values.iter_mut() {
        *v -= mean;
    }
    mean
}

/// Shrinks `values` onto the ball `mean(f_j^2) <= 1`; never inflates.
fn shrink_to_unit_rms(values: &mut [f64]) {
    let r = rms(values);
    if r > 1.0 {
        for v in values.iter_mut() {
            *v /= r;
        }
    }
}

fn is_degenerate(centered: &[f64], original_scale: f64) -> bool {
    let max_abs = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    max_abs <= 1e-13 * original_scale.max(1.0)
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Quantile normalization of `x` onto `f`: `out[j] = f[rank(x)[j]]`.
pub fn quantile_normalize(x: &[f64], f: &TargetQuantile) -> Result<Vec<f64>> {
    check_dim(f.len(), x.len())?;
    let s = sort_sample(x)?;
    apply_pi(&s, f.values())
}

/// Distribution families with a closed-form or bisection inverse CDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileFamily {
    Gaussian,
    Cauchy,
    Exponential,
    Uniform,
    BimodalGaussian,
}

impl QuantileFamily {
    pub const ALL: [QuantileFamily; 5] = [
        QuantileFamily::Gaussian,
        QuantileFamily::Cauchy,
        QuantileFamily::Exponential,
        QuantileFamily::Uniform,
        QuantileFamily::BimodalGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuantileFamily::Gaussian => "gaussian",
            QuantileFamily::Cauchy => "cauchy",
            QuantileFamily::Exponential => "exponential",
            QuantileFamily::Uniform => "uniform",
            QuantileFamily::BimodalGaussian => "bimodal-gaussian",
        }
    }

    /// Inverse CDF at `u` in `(0, 1)`.
    pub fn inverse_cdf(self, u: f64) -> f64 {
        match self {
            QuantileFamily::Gaussian => standard_normal().inverse_cdf(u),
            QuantileFamily::Cauchy => (std::f64::consts::PI * (u - 0.5)).tan(),
            QuantileFamily::Exponential => -(-u).ln_1p(),
            QuantileFamily::Uniform => u,
            QuantileFamily::BimodalGaussian => {
                BimodalGaussian::default().inverse_cdf(u)
            }
        }
    }
}

impl fmt::Display for QuantileFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuantileFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QuantileFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Equal-weight mixture of `N(-separation, sd^2)` and `N(+separation, sd^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BimodalGaussian {
    pub separation: f64,
    pub sd: f64,
}

impl Default for BimodalGaussian {
    fn default() -> Self {
        Self {
            separation: 2.0,
            sd: 1.0,
        }
    }
}

impl BimodalGaussian {
    pub fn cdf(&self, x: f64) -> f64 {
        let n = standard_normal();
        0.5 * (n.cdf((x + self.separation) / self.sd) + n.cdf((x - self.separation) / self.sd))
    }

    /// Bisection to an absolute tolerance of `1e-10`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let n = standard_normal();
        // each component quantile brackets the mixture quantile
        let mut lo = -self.separation + self.sd * n.inverse_cdf(u);
        let mut hi = self.separation + self.sd * n.inverse_cdf(u);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn quantile(&self, p: usize) -> Result<TargetQuantile> {
        if !(self.sd > 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("bimodal mixture needs sd > 0"));
        }
        from_plotting_positions(p, |u| self.inverse_cdf(u))
    }
}

fn from_plotting_positions(p: usize, inv: impl Fn(f64) -> f64) -> Result<TargetQuantile> {
    if p < 2 {
        return Err(Error::invalid(format!("quantile length must be >= 2, got {p}")));
    }
    let mut values: Vec<f64> = (1..=p)
        .map(|j| inv((j as f64 - 0.5) / p as f64))
        .collect();
    center_in_place(&mut values);
    TargetQuantile::new(values)
}

/// `f_j = F^{-1}((j - 0.5) / p)` for `j = 1..p`, centered.
pub fn make_distribution_quantile(family: QuantileFamily, p: usize) -> Result<TargetQuantile> {
    from_plotting_positions(p, |u| family.inverse_cdf(u))
}

/// Column-wise median of the sorted rows of `data`, centered.
pub fn median_quantile(data: &Dataset) -> Result<TargetQuantile> {
    let n = data.n();
    if n == 0 {
        return Err(Error::invalid("median quantile of an empty dataset"));
    }
    let p = data.p();
    // columns of the sorted-row matrix
    let mut columns = vec![Vec::with_capacity(n); p];
    for (row, s) in data.rows().zip(data.sorted()) {
        for (k, &j) in s.order().iter().enumerate() {
            columns[k].push(row[j]);
        }
    }
    let mut values: Vec<f64> = columns.iter_mut().map(|c| median(c)).collect();
    center_in_place(&mut values);
    TargetQuantile::new(values)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Centers `f`, then shrinks it onto `mean(f_j^2) <= 1` if it lies outside.
pub fn project_f0(f: &[f64]) -> Result<TargetQuantile> {
    if f.is_empty() || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("quantile must be non-empty and finite"));
    }
    let scale = max_abs(f);
    let mut values = f.to_vec();
    center_in_place(&mut values);
    if is_degenerate(&values, scale) {
        return Err(Error::DegenerateQuantile(
            "quantile is constant after centering".into(),
        ));
    }
    shrink_to_unit_rms(&mut values);
    TargetQuantile::new(values)
}

/// Euclidean projection onto non-decreasing, centered vectors with
/// `mean(f_j^2) <= 1`.
pub fn project_fbnd(f: &[f64]) -> Result<TargetQuantile> {
    if f.is_empty() || f.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("quantile must be non-empty and finite"));
    }
    let scale = max_abs(f);
    let mut values = f.to_vec();
    project_fbnd_in_place(&mut values);
    if is_degenerate(&values, scale) {
        return Err(Error::DegenerateQuantile(
            "isotonic projection is constant".into(),
        ));
    }
    TargetQuantile::new(values)
}

/// Same projection without the degeneracy check; a constant input maps to 0,
/// which is the correct projection.
pub(crate) fn project_fbnd_in_place(values: &mut [f64]) {
    let iso = pava_unchecked(values);
    values.copy_from_slice(&iso);
    center_in_place(values);
    shrink_to_unit_rms(values);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn q(v: &[f64]) -> TargetQuantile {
        TargetQuantile::new(v.to_vec()).unwrap()
    }

    #[test]
    fn worked_example() {
        let out = quantile_normalize(&[4.5, 1.2, 10.1, 8.9], &q(&[0.0, 1.0, 3.0, 4.0])).unwrap();
        assert_eq!(out, vec![1.0, 0.0, 4.0, 3.0]);
    }

    #[test]
    fn normalizing_onto_own_quantiles_is_identity() {
        let x = [0.7, -3.0, 2.2, 0.1, 9.0];
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(quantile_normalize(&x, &q(&sorted)).unwrap(), x.to_vec());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            quantile_normalize(&[1.0, 2.0], &q(&[1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn flags_are_certified() {
        let a = q(&[-1.0, 0.0, 1.0]);
        assert!(a.is_monotone() && a.is_centered());
        let b = q(&[1.0, 0.0, 2.0]);
        assert!(!b.is_monotone() && !b.is_centered());
        assert!(TargetQuantile::new(vec![]).is_err());
        assert!(TargetQuantile::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn uniform_family() {
        let f = make_distribution_quantile(QuantileFamily::Uniform, 4).unwrap();
        let expected = [-0.375, -0.125, 0.125, 0.375];
        for (a, b) in f.values().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(f.is_monotone() && f.is_centered());
    }

    #[test]
    fn gaussian_family_two_points() {
        let f = make_distribution_quantile(QuantileFamily::Gaussian, 2).unwrap();
        // standard normal 75% quantile
        let c = 0.674_489_750_196_081_7;
        assert_abs_diff_eq!(f.values()[0], -c, epsilon = 1e-12);
        assert_abs_diff_eq!(f.values()[1], c, epsilon = 1e-12);
    }

    #[test]
    fn exponential_family() {
        let f = make_distribution_quantile(QuantileFamily::Exponential, 4).unwrap();
        let raw: Vec<f64> = [0.875f64, 0.625, 0.375, 0.125].iter().map(|u| -u.ln()).collect();
        let mean = raw.iter().sum::<f64>() / 4.0;
        for (a, b) in f.values().iter().zip(&raw) {
            assert_abs_diff_eq!(*a, b - mean, epsilon = 1e-14);
        }
    }

    #[test]
    fn families_strictly_increasing() {
        for fam in QuantileFamily::ALL {
            let f = make_distribution_quantile(fam, 50).unwrap();
            assert!(f.values().windows(2).all(|w| w[0] < w[1]), "{fam}");
            assert!(f.is_centered());
        }
    }

    #[test]
    fn family_names_round_trip() {
        for fam in QuantileFamily::ALL {
            assert_eq!(fam.name().parse::<QuantileFamily>().unwrap(), fam);
        }
        assert!(matches!(
            "laplace".parse::<QuantileFamily>(),
            Err(Error::UnknownFamily(_))
        ));
        assert!(make_distribution_quantile(QuantileFamily::Gaussian, 1).is_err());
    }

    #[test]
    fn bimodal_inverse_cdf_inverts_cdf() {
        let b = BimodalGaussian::default();
        for u in [0.01, 0.2, 0.5, 0.77, 0.999] {
            let x = b.inverse_cdf(u);
            assert_abs_diff_eq!(b.cdf(x), u, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(b.inverse_cdf(0.5), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn median_quantile_cases() {
        let single = Dataset::from_rows("s", &[vec![3.0, 1.0, 2.0]], vec![1.0]).unwrap();
        assert_eq!(median_quantile(&single).unwrap().values(), &[-1.0, 0.0, 1.0]);

        let two = Dataset::from_rows(
            "t",
            &[vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0]],
            vec![1.0, -1.0],
        )
        .unwrap();
        let f = median_quantile(&two).unwrap();
        assert_eq!(f.values(), &[-1.0, 0.0, 1.0]);
        assert!(f.is_monotone() && f.is_centered());
    }

    #[test]
    fn project_f0_cases() {
        let f = project_f0(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.values(), &[-1.0, 0.0, 1.0]);

        let f = project_f0(&[0.0, 6.0]).unwrap();
        assert_abs_diff_eq!(f.values()[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.values()[1], 1.0, epsilon = 1e-15);

        assert!(matches!(
            project_f0(&[2.0, 2.0, 2.0]),
            Err(Error::DegenerateQuantile(_))
        ));
    }

    #[test]
    fn project_fbnd_cases() {
        let inside = [-0.5, 0.0, 0.5];
        assert_eq!(project_fbnd(&inside).unwrap().values(), &inside);
        assert!(matches!(
            project_fbnd(&[2.0, 1.0]),
            Err(Error::DegenerateQuantile(_))
        ));
        let f = project_fbnd(&[10.0, -3.0, 4.0, 20.0]).unwrap();
        assert!(f.is_monotone() && f.is_centered());
        assert!(f.rms() <= 1.0 + 1e-12);
    }
}
