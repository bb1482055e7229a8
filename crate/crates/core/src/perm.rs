//! Permutation representation of samples.
//!
//! Sorting a sample `x` of dimension `p` yields two mutually inverse index
//! arrays: `rank[j]` is the sorted position of entry `j`, and `order[k]` is the
//! index of the `k`-th smallest entry. Together they stand for the `p x p`
//! permutation matrix `P_x` with `P_x[j][rank[j]] = 1`, so that
//!
//! * `(P_x f)[j]   = f[rank[j]]`   (quantile normalization of `x` onto `f`)
//! * `(P_x^T w)[k] = w[order[k]]`
//!
//! Neither product materializes the matrix; both are `O(p)`.
//!
//! All indices are 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A sample reduced to the permutation that sorts it ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortedSample {
    rank: Vec<usize>,
    order: Vec<usize>,
}

impl SortedSample {
    /// Builds a sample from a rank array, checking it is a permutation.
    pub fn from_rank(rank: Vec<usize>) -> Result<Self> {
        let p = rank.len();
        if p == 0 {
            return Err(Error::invalid("empty rank array"));
        }
        let mut order = vec![usize::MAX; p];
        for (j, &r) in rank.iter().enumerate() {
            if r >= p || order[r] != usize::MAX {
                return Err(Error::invalid("rank array is not a permutation"));
            }
            order[r] = j;
        }
        Ok(Self { rank, order })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            rank: (0..p).collect(),
            order: (0..p).collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rank.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rank.is_empty()
    }

    #[inline]
    pub fn rank(&self) -> &[usize] {
        &self.rank
    }

    #[inline]
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `sum_j w[j] * f[rank[j]]`, i.e. `w^T P_x f`, without allocating.
    #[inline]
    pub fn bilinear(&self, w: &[f64], f: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.len());
        debug_assert_eq!(f.len(), self.len());
        self.rank
            .iter()
            .zip(w)
            .map(|(&r, &wj)| wj * f[r])
            .sum()
    }

    /// `out += alpha * P_x f`.
    #[inline]
    pub fn add_pi(&self, alpha: f64, f: &[f64], out: &mut [f64]) {
        for (o, &r) in out.iter_mut().zip(&self.rank) {
            *o += alpha * f[r];
        }
    }

    /// `out += alpha * P_x^T w`.
    #[inline]
    pub fn add_pi_transpose(&self, alpha: f64, w: &[f64], out: &mut [f64]) {
        for (o, &k) in out.iter_mut().zip(&self.order) {
            *o += alpha * w[k];
        }
    }
}

/// Sorts `x` ascending, breaking ties by original index.
pub fn sort_sample(x: &[f64]) -> Result<SortedSample> {
    if x.is_empty() {
        return Err(Error::invalid("cannot sort an empty sample"));
    }
    if let Some(j) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite entry at index {j}")));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    // stable sort keeps equal entries in index order
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut rank = vec![0; x.len()];
    for (pos, &j) in order.iter().enumerate() {
        rank[j] = pos;
    }
    Ok(SortedSample { rank, order })
}

/// `P_x f`: entry `j` receives `f[rank[j]]`.
pub fn apply_pi(s: &SortedSample, f: &[f64]) -> Result<Vec<f64>> {
    check_dim(s.len(), f.len())?;
    Ok(s.rank.iter().map(|&r| f[r]).collect())
}

/// `P_x^T w`: entry `k` receives `w[order[k]]`.
pub fn apply_pi_transpose(s: &SortedSample, w: &[f64]) -> Result<Vec<f64>> {
    check_dim(s.len(), w.len())?;
    Ok(s.order.iter().map(|&k| w[k]).collect())
}

/// Frobenius inner product of the two permutation matrices: the number of
/// entries ranked at the same position in both samples.
pub fn pi_inner_product(a: &SortedSample, b: &SortedSample) -> Result<usize> {
    check_dim(a.len(), b.len())?;
    Ok(a.rank.iter().zip(&b.rank).filter(|(x, y)| x == y).count())
}
