//! Labeled sample matrices with their permutations precomputed.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::perm::{sort_sample, SortedSample};

/// An `n x p` feature matrix (row-major, one row per sample), one label per
/// row, and the sorted representation of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    p: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    sorted: Vec<SortedSample>,
}

impl Dataset {
    /// Builds a dataset from a flat row-major matrix.
    pub fn new(
        name: impl Into<String>,
        p: usize,
        features: Vec<f64>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if features.len() % p != 0 {
            return Err(Error::invalid(format!(
                "{} values do not form rows of width {p}",
                features.len()
            )));
        }
        let n = features.len() / p;
        if n == 0 {
            return Err(Error::invalid("dataset has no samples"));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("non-finite label"));
        }
        let sorted = features
            .chunks_exact(p)
            .enumerate()
            .map(|(i, row)| {
                sort_sample(row).map_err(|e| Error::invalid(format!("row {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: name.into(),
            p,
            features,
            labels,
            sorted,
        })
    }

    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        Self::new(name, p, rows.concat(), labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.p)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn sorted(&self) -> &[SortedSample] {
        &self.sorted
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            name: self.name.clone(),
            p: self.p,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            sorted: indices.iter().map(|&i| self.sorted[i].clone()).collect(),
        }
    }

    /// Counts of `(+1, -1)` labels; other values are counted in neither.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1.0).count();
        let neg = self.labels.iter().filter(|&&y| y == -1.0).count();
        (pos, neg)
    }

    /// Fails unless every label is `+1` or `-1` and both classes occur.
    pub fn require_binary(&self) -> Result<(usize, usize)> {
        let (pos, neg) = self.class_counts();
        if pos + neg != self.n() {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        if pos == 0 || neg == 0 {
            return Err(Error::DegenerateLabels(format!(
                "need both classes, got {pos} positive and {neg} negative"
            )));
        }
        Ok((pos, neg))
    }

    /// SHA-256 over the shape, labels and features (little-endian bytes).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.p as u64).to_le_bytes());
        for y in &self.labels {
            h.update(y.to_le_bytes());
        }
        for x in &self.features {
            h.update(x.to_le_bytes());
        }
        h.finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
