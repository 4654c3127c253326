use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par, Side};

use super::sparse::SparseSym;
use crate::error::{Error, Result};

enum Kind {
    Cholesky(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

/// Sparse direct factorization of a symmetric matrix (Cholesky when it is
/// positive definite, LU otherwise).
pub struct Factorization {
    n: usize,
    kind: Kind,
}

fn full_triplets(a: &SparseSym) -> Vec<Triplet<usize, usize, f64>> {
    let mut t = Vec::with_capacity(2 * a.nnz_upper());
    for (i, j, v) in a.upper() {
        t.push(Triplet::new(i, j, v));
        if i != j {
            t.push(Triplet::new(j, i, v));
        }
    }
    t
}

impl Factorization {
    pub fn new(a: &SparseSym) -> Result<Self> {
        // Sequential kernels keep results bit-reproducible.
        faer::set_global_parallelism(Par::Seq);
        let n = a.n();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &full_triplets(a)).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        if let Ok(llt) = mat.sp_cholesky(Side::Lower) {
            return Ok(Self { n, kind: Kind::Cholesky(llt) });
        }
        let lu = mat.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self { n, kind: Kind::Lu(lu) })
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self.kind, Kind::Cholesky(_))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = Mat::<f64>::zeros(self.n, 1);
        for i in 0..self.n {
            rhs[(i, 0)] = b[i];
        }
        let x = self.solve_mat(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, rhs: &Mat<f64>) -> Mat<f64> {
        match &self.kind {
            Kind::Cholesky(f) => f.solve(rhs),
            Kind::Lu(f) => f.solve(rhs),
        }
    }
}
