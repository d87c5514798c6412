//! Symmetric nonnegative edge-weight matrices.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Weighted adjacency matrix of an undirected graph: symmetric, nonnegative,
/// zero diagonal. Immutable once built; shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    // row-major, n*n
    weights: Vec<f64>,
}

impl AffinityMatrix {
    /// All-zero matrix on `n` vertices.
    pub fn zeros(n: usize) -> Self {
        AffinityMatrix {
            n,
            weights: vec![0.0; n * n],
        }
    }

    /// Builds from a dense row list, validating symmetry, nonnegativity and a
    /// zero diagonal.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Dimension(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    r.len(),
                    n
                )));
            }
        }
        let mut m = AffinityMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.weights[i * n + j] = rows[i][j];
            }
        }
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.weights[i * n + i] != 0.0 {
                return Err(Error::Invalid(format!("nonzero diagonal at {}", i)));
            }
            for j in (i + 1)..n {
                let a = self.weights[i * n + j];
                let b = self.weights[j * n + i];
                if a < 0.0 || b < 0.0 {
                    return Err(Error::Invalid(format!("negative weight at ({}, {})", i, j)));
                }
                if a != b {
                    return Err(Error::Invalid(format!(
                        "asymmetric weights at ({}, {}): {} vs {}",
                        i, j, a, b
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::Invalid(format!("non-finite weight at ({}, {})", i, j)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Sets the symmetric pair (i, j) and (j, i). Diagonal must stay zero.
    pub fn set(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        if i == j && w != 0.0 {
            return Err(Error::Invalid(format!("nonzero diagonal at {}", i)));
        }
        if w < 0.0 || !w.is_finite() {
            return Err(Error::Invalid(format!("bad weight {} at ({}, {})", w, i, j)));
        }
        self.weights[i * self.n + j] = w;
        self.weights[j * self.n + i] = w;
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    /// Weighted degree (row sum) of vertex `i`.
    pub fn degree(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Maximum weighted degree over all vertices; 0 for the empty graph.
    pub fn max_degree(&self) -> f64 {
        (0..self.n).map(|i| self.degree(i)).fold(0.0, f64::max)
    }

    /// Principal submatrix indexed by `keep` (order preserved).
    pub fn submatrix(&self, keep: &[usize]) -> AffinityMatrix {
        let m = keep.len();
        let mut sub = AffinityMatrix::zeros(m);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                sub.weights[a * m + b] = self.get(i, j);
            }
        }
        sub
    }

    /// y = A·x for a dense vector.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (aij, xj) in row.iter().zip(x.iter()) {
                acc += aij * xj;
            }
            *yi = acc;
        }
    }

    /// y = A·x exploiting a sparse x: only columns in `support` contribute.
    /// By symmetry column j of A is row j, so this walks contiguous rows.
    pub fn mul_vec_sparse(&self, x: &[f64], support: &[usize], y: &mut [f64]) {
        y.fill(0.0);
        for &j in support {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let row = self.row(j);
            for (yi, aji) in y.iter_mut().zip(row.iter()) {
                *yi += aji * xj;
            }
        }
    }

    /// Largest eigenvalue of the (symmetric, nonnegative) matrix by shifted
    /// power iteration. Returns 0 for the empty or all-zero matrix.
    ///
    /// The shift keeps the dominant eigenvalue unique in magnitude even on
    /// bipartite components where lambda_min = -lambda_max.
    pub fn lambda_max(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        if self.weights.iter().all(|&w| w == 0.0) {
            return 0.0;
        }
        let shift = 1.0;
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut av = vec![0.0; n];
        let mut rayleigh = 0.0;
        for _ in 0..10_000 {
            self.mul_vec(&v, &mut av);
            for i in 0..n {
                av[i] += shift * v[i];
            }
            let norm = av.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            for i in 0..n {
                av[i] /= norm;
            }
            std::mem::swap(&mut v, &mut av);
            self.mul_vec(&v, &mut av);
            let rq: f64 = v.iter().zip(av.iter()).map(|(a, b)| a * b).sum();
            if (rq - rayleigh).abs() <= 1e-13 * (1.0 + rq.abs()) {
                return rq.max(0.0);
            }
            rayleigh = rq;
        }
        rayleigh.max(0.0)
    }

    /// Serializes as dense text: one row per line, space-separated decimals.
    pub fn to_dense_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the dense text format.
    pub fn from_dense_text(text: &str, path: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            match row {
                Ok(r) => rows.push(r),
                Err(e) => return Err(Error::parse(path, lineno + 1, e.to_string())),
            }
        }
        AffinityMatrix::from_rows(rows)
    }

    /// Serializes nonzero upper-triangle entries as "i j w" lines, 0-indexed.
    pub fn to_sparse_triples(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let w = self.get(i, j);
                if w != 0.0 {
                    let _ = writeln!(out, "{} {} {}", i, j, w);
                }
            }
        }
        out
    }

    /// Parses "i j w" triple lines. `n` fixes the vertex count; pass `None`
    /// to infer it as max index + 1.
    pub fn from_sparse_triples(text: &str, n: Option<usize>, path: &str) -> Result<Self> {
        let mut triples = Vec::new();
        let mut max_idx = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected 'i j w', got {} fields", fields.len()),
                ));
            }
            let i: usize = fields[0]
                .parse()
                .map_err(|e: std::num::ParseIntError| Error::parse(path, lineno + 1, e.to_string()))?;
            let j: usize = fields[1]
                .parse()
                .map_err(|e: std::num::ParseIntError| Error::parse(path, lineno + 1, e.to_string()))?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|e: std::num::ParseFloatError| Error::parse(path, lineno + 1, e.to_string()))?;
            max_idx = max_idx.max(i).max(j);
            triples.push((i, j, w));
        }
        let n = n.unwrap_or(if triples.is_empty() { 0 } else { max_idx + 1 });
        let mut m = AffinityMatrix::zeros(n);
        for (i, j, w) in triples {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!(
                    "triple ({}, {}) out of range for n = {}",
                    i, j, n
                )));
            }
            m.set(i, j, w)?;
        }
        Ok(m)
    }

    pub fn write_dense(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_dense_text())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_dense(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_dense_text(&text, &path.display().to_string())
    }
}
