//! P1 finite elements on the cracked mesh: assembly, constraint elimination
//! and the generalized symmetric eigensolver.

mod assemble;
mod dofmap;
mod eigen;
mod factor;
mod sparse;

pub use assemble::{assemble, element_matrices, triangle_gradient};
pub use dofmap::{reduce, reduce_one, DofMap};
pub use eigen::{clusters, solve_eigs, solve_eigs_with, EigenOptions, EigenPair};
pub use factor::Factorization;
pub use sparse::SparseSym;

use crate::error::Result;
use crate::geometry::CrackedMesh;

/// Assembled and reduced matrices of one constraint configuration.
pub struct Problem {
    pub map: DofMap,
    pub k: SparseSym,
    pub m: SparseSym,
}

impl Problem {
    pub fn new(full_k: &SparseSym, full_m: &SparseSym, map: DofMap) -> Result<Self> {
        let (k, m) = reduce(full_k, full_m, &map)?;
        Ok(Self { map, k, m })
    }

    /// Eigenpairs with vectors expanded to all mesh nodes.
    pub fn eigen(&self, count: usize, shift: Option<f64>, opts: &EigenOptions) -> Result<Vec<(EigenPair, Vec<f64>)>> {
        let pairs = solve_eigs_with(&self.k, &self.m, count, shift, opts)?;
        Ok(pairs.into_iter().map(|p| {
            let full = self.map.expand(&p.vector);
            (p, full)
        }).collect())
    }
}

/// Convenience: eigenvalues of the slit problem on `mesh`.
pub fn cracked_eigenvalues(mesh: &CrackedMesh, count: usize) -> Result<Vec<f64>> {
    let (k, m) = assemble(mesh)?;
    let p = Problem::new(&k, &m, DofMap::cracked(mesh))?;
    Ok(solve_eigs(&p.k, &p.m, count, None)?.into_iter().map(|e| e.lambda).collect())
}
