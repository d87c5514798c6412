//! Points of the standard simplex and their supports.

use crate::error::{Error, Result};

/// Entries below this are treated as outside the support.
pub const SUPPORT_EPS: f64 = 1e-8;

/// A probability distribution over graph vertices. Entries are nonnegative
/// and sum to 1; the support is the set of entries above [`SUPPORT_EPS`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector {
    entries: Vec<f64>,
}

impl SimplexVector {
    /// Validates nonnegativity and unit sum (within 1e-9).
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|&e| e < 0.0 || !e.is_finite()) {
            return Err(Error::Invalid("simplex entries must be finite and >= 0".into()));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("simplex entries sum to {}, not 1", sum)));
        }
        Ok(SimplexVector { entries })
    }

    /// Uniform distribution over all of `0..n`.
    pub fn barycenter(n: usize) -> Self {
        SimplexVector {
            entries: vec![1.0 / n as f64; n],
        }
    }

    /// Uniform distribution over the face spanned by `subset`.
    pub fn barycenter_of(n: usize, subset: &[usize]) -> Self {
        let mut entries = vec![0.0; n];
        let w = 1.0 / subset.len() as f64;
        for &i in subset {
            entries[i] = w;
        }
        SimplexVector { entries }
    }

    /// Near-uniform distribution over `subset` with a deterministic index
    /// gradient of relative size `tilt`. Breaks the exact symmetry that
    /// makes the true barycenter a rest point of the dynamics on graphs
    /// with isomorphic components.
    pub fn tilted_barycenter_of(n: usize, subset: &[usize], tilt: f64) -> Self {
        let k = subset.len();
        if k <= 1 {
            return Self::barycenter_of(n, subset);
        }
        let mut order: Vec<usize> = subset.to_vec();
        order.sort_unstable();
        let mut entries = vec![0.0; n];
        let mut sum = 0.0;
        for (rank, &i) in order.iter().enumerate() {
            let w = 1.0 + tilt * rank as f64 / (k - 1) as f64;
            entries[i] = w;
            sum += w;
        }
        for e in entries.iter_mut() {
            *e /= sum;
        }
        SimplexVector { entries }
    }

    /// Pure strategy e_i.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut entries = vec![0.0; n];
        entries[i] = 1.0;
        SimplexVector { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries[i]
    }

    /// sigma(x) under the given threshold.
    pub fn support_with(&self, eps: f64) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > eps)
            .map(|(i, _)| i)
            .collect()
    }

    /// sigma(x) under [`SUPPORT_EPS`].
    pub fn support(&self) -> Vec<usize> {
        self.support_with(SUPPORT_EPS)
    }

    /// Renormalizes in place so the entries sum to exactly 1.
    pub(crate) fn renormalize(entries: &mut [f64]) {
        let sum: f64 = entries.iter().sum();
        if sum > 0.0 {
            for e in entries.iter_mut() {
                *e /= sum;
            }
        }
    }

    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        SimplexVector { entries }
    }

    /// Embeds a distribution over subgraph positions `index_map` into a
    /// zeroed full-length vector.
    pub fn embed(n: usize, index_map: &[usize], local: &SimplexVector) -> Self {
        let mut entries = vec![0.0; n];
        for (pos, &i) in index_map.iter().enumerate() {
            entries[i] = local.entries[pos];
        }
        SimplexVector { entries }
    }
}
