use super::sparse::SparseSym;
use crate::error::{Error, Result};
use crate::geometry::CrackedMesh;

/// Map from mesh nodes to reduced unknowns: `None` for eliminated nodes,
/// otherwise `(dof, ±1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub nodes: Vec<Option<(usize, f64)>>,
    pub n_dofs: usize,
}

impl DofMap {
    /// General builder: `fixed` nodes are eliminated; the minus copy of pair `i`
    /// takes the plus DOF with weight `+1` when `continuous[i]`, `−1` otherwise.
    pub fn build(mesh: &CrackedMesh, fixed: &[bool], continuous: &[bool]) -> Self {
        let n = mesh.n_nodes();
        let mut minus_of = vec![usize::MAX; n];
        for (k, &[_, m]) in mesh.crack_pairs.iter().enumerate() {
            minus_of[m] = k;
        }
        let mut nodes = vec![None; n];
        let mut next = 0;
        for i in 0..n {
            if fixed[i] || minus_of[i] != usize::MAX {
                continue;
            }
            nodes[i] = Some((next, 1.0));
            next += 1;
        }
        for (k, &[p, m]) in mesh.crack_pairs.iter().enumerate() {
            if fixed[m] {
                continue;
            }
            let sign = if continuous[k] { 1.0 } else { -1.0 };
            nodes[m] = nodes[p].map(|(d, _)| (d, sign));
        }
        Self { nodes, n_dofs: next }
    }

    fn fixed_set(mesh: &CrackedMesh) -> Vec<bool> {
        let mut fixed = vec![false; mesh.n_nodes()];
        for &i in &mesh.dirichlet_nodes {
            fixed[i] = true;
        }
        fixed
    }

    /// The slit problem with the pole at the mesh tip: Dirichlet and tip
    /// eliminated, anti-periodic pairs along the whole crack.
    pub fn cracked(mesh: &CrackedMesh) -> Self {
        let mut fixed = Self::fixed_set(mesh);
        if let Some(t) = mesh.tip_node {
            fixed[t] = true;
        }
        Self::build(mesh, &fixed, &vec![false; mesh.crack_pairs.len()])
    }

    /// The same mesh viewed as the limit problem with the pole at the origin:
    /// pairs between origin and pole are glued continuously, the origin is
    /// eliminated, the remaining pairs stay anti-periodic.
    pub fn limit(mesh: &CrackedMesh) -> Self {
        let mut fixed = Self::fixed_set(mesh);
        let mut continuous = vec![false; mesh.crack_pairs.len()];
        for &k in &mesh.s_a_pairs {
            continuous[k] = true;
        }
        match mesh.origin_pair() {
            Some(k) => {
                let [p, m] = mesh.crack_pairs[k];
                fixed[p] = true;
                fixed[m] = true;
            }
            None => {
                if let Some(t) = mesh.tip_node {
                    fixed[t] = true;
                }
            }
        }
        Self::build(mesh, &fixed, &continuous)
    }

    /// [`DofMap::cracked`] with every node outside the disk of radius `r`
    /// (and on its boundary) eliminated.
    pub fn cracked_within(mesh: &CrackedMesh, r: f64) -> Self {
        let mut fixed = Self::fixed_set(mesh);
        if let Some(t) = mesh.tip_node {
            fixed[t] = true;
        }
        for t in &mesh.triangles {
            let c = t.iter().fold([0.0, 0.0], |a, &i| [a[0] + mesh.vertices[i][0] / 3.0, a[1] + mesh.vertices[i][1] / 3.0]);
            if c[0].hypot(c[1]) > r {
                for &i in t {
                    fixed[i] = true;
                }
            }
        }
        for &[p, m] in &mesh.crack_pairs {
            if fixed[p] || fixed[m] {
                fixed[p] = true;
                fixed[m] = true;
            }
        }
        Self::build(mesh, &fixed, &vec![false; mesh.crack_pairs.len()])
    }

    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|m| m.map_or(0.0, |(d, s)| s * reduced[d])).collect()
    }

    /// Transpose of the expansion map: `Pᵀ f`.
    pub fn restrict_dual(&self, full: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_dofs];
        for (i, m) in self.nodes.iter().enumerate() {
            if let Some((d, s)) = m {
                r[*d] += s * full[i];
            }
        }
        r
    }

    /// Reduced coordinates of a compliant full vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_dofs];
        for (i, m) in self.nodes.iter().enumerate() {
            if let Some((d, s)) = m {
                if *s > 0.0 {
                    r[*d] = full[i];
                }
            }
        }
        r
    }

    pub fn is_free(&self, node: usize) -> bool {
        self.nodes[node].is_some()
    }
}

/// Congruence `PᵀAP` for one matrix.
pub fn reduce_one(a: &SparseSym, map: &DofMap) -> Result<SparseSym> {
    if a.n() != map.nodes.len() {
        return Err(Error::Shape(format!("matrix {} vs map {}", a.n(), map.nodes.len())));
    }
    let entries = a.upper().filter_map(|(i, j, v)| {
        let (di, si) = map.nodes[i]?;
        let (dj, sj) = map.nodes[j]?;
        let w = if i != j && di == dj { 2.0 } else { 1.0 };
        Some((di, dj, si * sj * v * w))
    });
    Ok(SparseSym::from_upper_triplets(map.n_dofs, entries))
}

/// Eliminates constraints from stiffness and mass matrices.
pub fn reduce(k: &SparseSym, m: &SparseSym, map: &DofMap) -> Result<(SparseSym, SparseSym)> {
    Ok((reduce_one(k, map)?, reduce_one(m, map)?))
}
