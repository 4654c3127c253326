use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};

/// Symmetric sparse matrix storing the upper triangle in compressed rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Builds from `(i, j, v)` entries; each off-diagonal position must be
    /// given once (either orientation). Duplicates are summed.
    pub fn from_upper_triplets<I: IntoIterator<Item = (usize, usize, f64)>>(n: usize, entries: I) -> Self {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (i, j, v) in entries {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            *rows[a].entry(b).or_insert(0.0) += v;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in rows {
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz_upper(&self) -> usize {
        self.vals.len()
    }

    /// Stored upper-triangle entries `(i, j, v)` with `i ≤ j`.
    pub fn upper(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k])))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let range = self.row_ptr[a]..self.row_ptr[a + 1];
        match self.cols[range.clone()].binary_search(&b) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let v = self.vals[k];
                acc += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
            y[i] += acc;
        }
    }

    /// `xᵀ A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        crate::numeric::dot(x, &self.matvec(y))
    }

    /// Maximum absolute row sum of the full matrix.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for (i, j, v) in self.upper() {
            rows[i] += v.abs();
            if i != j {
                rows[j] += v.abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn sum_all(&self) -> f64 {
        self.upper().map(|(i, j, v)| if i == j { v } else { 2.0 * v }).sum()
    }

    /// `self + c·other` on the union pattern.
    pub fn axpy(&self, c: f64, other: &SparseSym) -> Result<SparseSym> {
        if self.n != other.n {
            return Err(Error::Shape(format!("{} vs {}", self.n, other.n)));
        }
        Ok(Self::from_upper_triplets(self.n, self.upper().chain(other.upper().map(|(i, j, v)| (i, j, c * v)))))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, j, v) in self.upper() {
            d[i][j] = v;
            d[j][i] = v;
        }
        d
    }

    /// Coordinate dump, one `i j value` line per stored entry.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, j, v) in self.upper() {
            writeln!(w, "{i} {j} {v:?}")?;
        }
        Ok(())
    }
}
