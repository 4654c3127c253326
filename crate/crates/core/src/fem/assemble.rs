use super::sparse::SparseSym;
use crate::error::{Error, Result};
use crate::geometry::CrackedMesh;

/// P1 element stiffness and mass matrices of one triangle.
pub fn element_matrices(p: [[f64; 2]; 3]) -> Result<([[f64; 3]; 3], [[f64; 3]; 3], f64)> {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    if !(area.abs() > 0.0) {
        return Err(Error::DegenerateTriangle(0));
    }
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        g[i] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
    }
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area.abs() * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            m[i][j] = area.abs() / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    Ok((k, m, area))
}

/// Gradient of the P1 interpolant of `values` on triangle `t`.
pub fn triangle_gradient(mesh: &CrackedMesh, t: usize, values: &[f64]) -> [f64; 2] {
    let tri = mesh.triangles[t];
    let p = tri.map(|i| mesh.vertices[i]);
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let mut g = [0.0; 2];
    for i in 0..3 {
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        g[0] += values[tri[i]] * (a[1] - b[1]) / (2.0 * area);
        g[1] += values[tri[i]] * (b[0] - a[0]) / (2.0 * area);
    }
    g
}

/// Stiffness and mass matrices over all mesh nodes.
pub fn assemble(mesh: &CrackedMesh) -> Result<(SparseSym, SparseSym)> {
    let mut kt = Vec::with_capacity(mesh.triangles.len() * 6);
    let mut mt = Vec::with_capacity(mesh.triangles.len() * 6);
    for (n, t) in mesh.triangles.iter().enumerate() {
        let p = t.map(|i| mesh.vertices[i]);
        let (k, m, _) = element_matrices(p).map_err(|_| Error::DegenerateTriangle(n))?;
        for a in 0..3 {
            for b in a..3 {
                kt.push((t[a], t[b], k[a][b]));
                mt.push((t[a], t[b], m[a][b]));
            }
        }
    }
    let n = mesh.n_nodes();
    Ok((SparseSym::from_upper_triplets(n, kt), SparseSym::from_upper_triplets(n, mt)))
}
