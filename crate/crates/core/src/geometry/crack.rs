use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{cross, sub, Boundary, Domain};
use crate::error::{Error, Result};

/// The slit `{s·e : s ≤ t_pole}` clipped to the domain, `e = (cos α, sin α)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrackGeometry {
    pub alpha: f64,
    pub t_pole: f64,
    /// Distance from the origin to the boundary exit point along `-e`.
    pub exit_distance: f64,
}

/// `(cos α, sin α)` with exact values on the coordinate axes.
pub(crate) fn unit(alpha: f64) -> [f64; 2] {
    let (s, c) = alpha.sin_cos();
    let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else if (v.abs() - 1.0).abs() < 1e-15 { v.signum() } else { v };
    [snap(c), snap(s)]
}

impl CrackGeometry {
    pub fn direction(&self) -> [f64; 2] {
        unit(self.alpha)
    }

    /// Unit normal pointing into the plus side.
    pub fn normal(&self) -> [f64; 2] {
        let e = self.direction();
        [-e[1], e[0]]
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        let e = self.direction();
        [s * e[0], s * e[1]]
    }

    pub fn pole(&self) -> [f64; 2] {
        self.point(self.t_pole)
    }

    pub fn exit(&self) -> [f64; 2] {
        self.point(-self.exit_distance)
    }

    /// Whole slit, from the boundary exit to the pole.
    pub fn crack_segment(&self) -> ([f64; 2], [f64; 2]) {
        (self.exit(), self.pole())
    }

    /// Segment between the origin and the pole.
    pub fn s_a(&self) -> ([f64; 2], [f64; 2]) {
        ([0.0, 0.0], self.pole())
    }

    /// Signed coordinate along the crack line.
    pub fn param(&self, p: [f64; 2]) -> f64 {
        let e = self.direction();
        p[0] * e[0] + p[1] * e[1]
    }

    /// Signed distance from the crack line, positive on the plus side.
    pub fn side(&self, p: [f64; 2]) -> f64 {
        let n = self.normal();
        p[0] * n[0] + p[1] * n[1]
    }
}

/// Clips the ray through the origin at angle `α` to the domain.
pub fn insert_crack(domain: &Domain, alpha: f64, t_pole: f64) -> Result<CrackGeometry> {
    if !(alpha > -PI - 1e-15 && alpha <= PI + 1e-15) {
        return Err(Error::Invalid(format!("angle {alpha} outside (-π, π]")));
    }
    if !(t_pole >= 0.0) {
        return Err(Error::Invalid(format!("pole distance {t_pole} must be non-negative")));
    }
    let e = unit(alpha);
    let tol = 1e-10 * domain.diam;
    if t_pole > 0.0 {
        let a = [t_pole * e[0], t_pole * e[1]];
        if !domain.contains(a) || domain.distance_to_boundary(a) <= tol {
            return Err(Error::PoleOutside(t_pole));
        }
    }
    let exit_distance = match &domain.boundary {
        Boundary::Circle { radius } => *radius,
        Boundary::Polygon(v) => {
            let n = v.len();
            let back = [-e[0], -e[1]];
            let mut hits: Vec<f64> = Vec::new();
            for i in 0..n {
                let (p, q) = (v[i], v[(i + 1) % n]);
                let d = sub(q, p);
                let den = cross(back, d);
                if den.abs() < 1e-14 * domain.diam {
                    continue;
                }
                // Solve s·back = p + u·d.
                let s = cross(p, d) / den;
                let u = cross(p, back) / den;
                if s <= 0.0 || !(-1e-12..=1.0 + 1e-12).contains(&u) {
                    continue;
                }
                let corner = u.abs() * d[0].hypot(d[1]) <= tol || (1.0 - u).abs() * d[0].hypot(d[1]) <= tol;
                if corner {
                    return Err(Error::DegenerateClipping("ray exits through a polygon corner".into()));
                }
                hits.push(s);
            }
            if hits.len() != 1 {
                return Err(Error::DegenerateClipping(format!("ray meets the boundary {} times", hits.len())));
            }
            // The segment between origin and pole must not cross the boundary either.
            if t_pole > 0.0 {
                for i in 0..n {
                    let (p, q) = (v[i], v[(i + 1) % n]);
                    let d = sub(q, p);
                    let den = cross(e, d);
                    if den.abs() < 1e-14 {
                        continue;
                    }
                    let s = cross(p, d) / den;
                    let u = cross(p, e) / den;
                    if s > 0.0 && s <= t_pole && (0.0..=1.0).contains(&u) {
                        return Err(Error::PoleOutside(t_pole));
                    }
                }
            }
            hits[0]
        }
    };
    Ok(CrackGeometry { alpha, t_pole, exit_distance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, DomainSpec};

    #[test]
    fn disk_cracks() {
        let d = build_domain(&DomainSpec::disk(1.0)).unwrap();
        let c = insert_crack(&d, 0.0, 0.3).unwrap();
        assert_eq!(c.crack_segment(), ([-1.0, 0.0], [0.3, 0.0]));
        assert_eq!(c.s_a(), ([0.0, 0.0], [0.3, 0.0]));
        let c = insert_crack(&d, PI / 2.0, 0.0).unwrap();
        let (x, a) = c.crack_segment();
        assert!(x[0].abs() < 1e-15 && (x[1] + 1.0).abs() < 1e-15);
        assert!(a[0].abs() < 1e-15 && a[1].abs() < 1e-15);
        assert!(matches!(insert_crack(&d, 0.0, 1.5), Err(Error::PoleOutside(_))));
    }

    #[test]
    fn normal_orientation() {
        let d = build_domain(&DomainSpec::disk(1.0)).unwrap();
        for alpha in [0.0, 1.0, -2.0, PI] {
            let c = insert_crack(&d, alpha, 0.1).unwrap();
            let (e, n) = (c.direction(), c.normal());
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-15);
            assert!((cross(e, n) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rectangle_exit_and_corner() {
        let d = build_domain(&DomainSpec::rectangle(1.0, 0.6)).unwrap();
        let c = insert_crack(&d, 0.0, 0.2).unwrap();
        assert!((c.exit_distance - 1.0).abs() < 1e-14);
        let corner = 0.6f64.atan2(1.0);
        assert!(matches!(insert_crack(&d, corner, 0.1), Err(Error::DegenerateClipping(_))));
    }
}
