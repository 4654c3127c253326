//! Point location on a cracked mesh.

use std::collections::HashMap;

use super::mesher::CrackedMesh;

/// Bucket index over triangle bounding boxes.
pub struct Locator<'a> {
    mesh: &'a CrackedMesh,
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a CrackedMesh, cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (k, t) in mesh.triangles.iter().enumerate() {
            let ps = t.map(|i| mesh.vertices[i]);
            let lo = [ps.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min)];
            let hi = [ps.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max), ps.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max)];
            for ix in (lo[0] / cell).floor() as i64..=(hi[0] / cell).floor() as i64 {
                for iy in (lo[1] / cell).floor() as i64..=(hi[1] / cell).floor() as i64 {
                    buckets.entry((ix, iy)).or_default().push(k as u32);
                }
            }
        }
        Self { mesh, cell, buckets }
    }

    /// Triangle containing `p` and its barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let key = ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &k in self.buckets.get(&key)? {
            let t = self.mesh.triangles[k as usize];
            let [a, b, c] = t.map(|i| self.mesh.vertices[i]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
            let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
            let bary = [1.0 - l1 - l2, l1, l2];
            let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some((k as usize, bary));
            }
            if best.as_ref().map_or(true, |b| worst > b.2) {
                best = Some((k as usize, bary, worst));
            }
        }
        best.filter(|b| b.2 > -1e-12).map(|b| (b.0, b.1))
    }

    /// P1 interpolation of nodal values at `p`.
    pub fn interpolate(&self, values: &[f64], p: [f64; 2]) -> Option<f64> {
        let (k, bary) = self.locate(p)?;
        let t = self.mesh.triangles[k];
        Some(bary[0] * values[t[0]] + bary[1] * values[t[1]] + bary[2] * values[t[2]])
    }
}
