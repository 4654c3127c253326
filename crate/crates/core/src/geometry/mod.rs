//! Planar domains containing the origin, the crack along a ray, and graded
//! triangulations of the slit domain with duplicated crack nodes.

mod crack;
mod locate;
mod mesher;
mod meshio;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crack::{insert_crack, CrackGeometry};
pub use locate::Locator;
pub use mesher::{generate_mesh, CrackedMesh, MeshParams};
pub use meshio::{read_mesh, write_mesh};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainKind {
    Disk { radius: f64 },
    /// Counterclockwise vertex list.
    Polygon { vertices: Vec<[f64; 2]> },
    /// Axis-aligned rectangle centred at the origin with half-widths `w1`, `w2`.
    Rectangle { w1: f64, w2: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryTag {
    X1Axis,
    X2Axis,
    Rotation(u32),
}

impl std::fmt::Display for SymmetryTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SymmetryTag::X1Axis => write!(f, "x1-axis"),
            SymmetryTag::X2Axis => write!(f, "x2-axis"),
            SymmetryTag::Rotation(l) => write!(f, "rotation({l})"),
        }
    }
}

impl SymmetryTag {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        match *self {
            SymmetryTag::X1Axis => [p[0], -p[1]],
            SymmetryTag::X2Axis => [-p[0], p[1]],
            SymmetryTag::Rotation(l) => {
                let (s, c) = (2.0 * PI / l as f64).sin_cos();
                [c * p[0] - s * p[1], s * p[0] + c * p[1]]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub shape: DomainKind,
    #[serde(default)]
    pub symmetries: Vec<SymmetryTag>,
}

impl DomainSpec {
    pub fn disk(radius: f64) -> Self {
        Self {
            shape: DomainKind::Disk { radius },
            symmetries: vec![SymmetryTag::X1Axis, SymmetryTag::X2Axis],
        }
    }

    pub fn rectangle(w1: f64, w2: f64) -> Self {
        Self {
            shape: DomainKind::Rectangle { w1, w2 },
            symmetries: vec![SymmetryTag::X1Axis, SymmetryTag::X2Axis, SymmetryTag::Rotation(2)],
        }
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Self {
        Self { shape: DomainKind::Polygon { vertices }, symmetries: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Boundary {
    Circle { radius: f64 },
    Polygon(Vec<[f64; 2]>),
}

/// A validated domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub spec: DomainSpec,
    pub boundary: Boundary,
    pub area: f64,
    pub diam: f64,
}

pub(crate) fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>() / 2.0
}

/// Proper or touching intersection of two closed segments.
fn segments_meet(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(sub(b, a), sub(c, a));
    let d2 = cross(sub(b, a), sub(d, a));
    let d3 = cross(sub(d, c), sub(a, c));
    let d4 = cross(sub(d, c), sub(b, c));
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return true;
    }
    let on = |p: [f64; 2], q: [f64; 2], r: [f64; 2], o: f64| {
        o == 0.0 && r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    on(a, b, c, d1) || on(a, b, d, d2) || on(c, d, a, d3) || on(c, d, b, d4)
}

pub(crate) fn point_in_polygon(v: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if l2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0) };
    dist(p, [a[0] + s * ab[0], a[1] + s * ab[1]])
}

impl Domain {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match &self.boundary {
            Boundary::Circle { radius } => p[0].hypot(p[1]) < *radius,
            Boundary::Polygon(v) => point_in_polygon(v, p),
        }
    }

    pub fn distance_to_boundary(&self, p: [f64; 2]) -> f64 {
        match &self.boundary {
            Boundary::Circle { radius } => (radius - p[0].hypot(p[1])).abs(),
            Boundary::Polygon(v) => {
                let n = v.len();
                (0..n).map(|i| point_segment_distance(p, v[i], v[(i + 1) % n])).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Smallest interior corner angle of the boundary (π for a circle).
    pub fn min_corner_angle(&self) -> f64 {
        match &self.boundary {
            Boundary::Circle { .. } => PI,
            Boundary::Polygon(v) => {
                let n = v.len();
                (0..n)
                    .map(|i| {
                        let a = sub(v[(i + n - 1) % n], v[i]);
                        let b = sub(v[(i + 1) % n], v[i]);
                        let ang = cross(b, a).atan2(a[0] * b[0] + a[1] * b[1]);
                        ang.rem_euclid(2.0 * PI)
                    })
                    .fold(PI, f64::min)
            }
        }
    }

    pub fn has_symmetry(&self, tag: SymmetryTag) -> bool {
        self.spec.symmetries.contains(&tag)
    }
}

fn polygon_symmetric(v: &[[f64; 2]], tag: SymmetryTag, tol: f64) -> bool {
    let n = v.len();
    (0..n).all(|i| {
        let (a, b) = (tag.apply(v[i]), tag.apply(v[(i + 1) % n]));
        (0..n).any(|j| {
            let (c, d) = (v[j], v[(j + 1) % n]);
            (dist(a, c) <= tol && dist(b, d) <= tol) || (dist(a, d) <= tol && dist(b, c) <= tol)
        })
    })
}

/// Validates a domain description.
pub fn build_domain(spec: &DomainSpec) -> Result<Domain> {
    let boundary = match &spec.shape {
        DomainKind::Disk { radius } => {
            if !(*radius > 0.0) {
                return Err(Error::Invalid(format!("disk radius {radius} must be positive")));
            }
            Boundary::Circle { radius: *radius }
        }
        DomainKind::Rectangle { w1, w2 } => {
            if !(*w1 > 0.0 && *w2 > 0.0) {
                return Err(Error::Invalid("rectangle half-widths must be positive".into()));
            }
            Boundary::Polygon(vec![[-w1, -w2], [*w1, -w2], [*w1, *w2], [-w1, *w2]])
        }
        DomainKind::Polygon { vertices } => {
            if vertices.len() < 3 || signed_area(vertices) <= 0.0 {
                return Err(Error::BadPolygon);
            }
            let n = vertices.len();
            for i in 0..n {
                for j in (i + 1)..n {
                    if j == i + 1 || (i == 0 && j == n - 1) {
                        continue;
                    }
                    if segments_meet(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]) {
                        return Err(Error::SelfIntersecting);
                    }
                }
            }
            Boundary::Polygon(vertices.clone())
        }
    };
    let (area, diam) = match &boundary {
        Boundary::Circle { radius } => (PI * radius * radius, 2.0 * radius),
        Boundary::Polygon(v) => {
            let d = v.iter().flat_map(|a| v.iter().map(move |b| dist(*a, *b))).fold(0.0, f64::max);
            (signed_area(v), d)
        }
    };
    let domain = Domain { spec: spec.clone(), boundary, area, diam };
    if !domain.contains([0.0, 0.0]) || domain.distance_to_boundary([0.0, 0.0]) <= 1e-12 * diam {
        return Err(Error::OriginNotInterior);
    }
    if let Boundary::Polygon(v) = &domain.boundary {
        for tag in &spec.symmetries {
            if !polygon_symmetric(v, *tag, 1e-12 * diam) {
                return Err(Error::SymmetryFails(tag.to_string()));
            }
        }
    }
    Ok(domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_and_rectangle() {
        let d = build_domain(&DomainSpec::disk(1.0)).unwrap();
        assert!((d.area - PI).abs() < 1e-15);
        let mut spec = DomainSpec::disk(1.0);
        spec.symmetries.push(SymmetryTag::Rotation(7));
        assert!(build_domain(&spec).is_ok());
        let r = build_domain(&DomainSpec::rectangle(1.0, 0.6)).unwrap();
        assert!((r.area - 2.4).abs() < 1e-14);
        assert!(matches!(&r.boundary, Boundary::Polygon(v) if v.len() == 4));
    }

    #[test]
    fn origin_outside_rejected() {
        let spec = DomainSpec::polygon(vec![[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [1.0, 2.0]]);
        assert!(matches!(build_domain(&spec), Err(Error::OriginNotInterior)));
    }

    #[test]
    fn symmetry_validation() {
        let mut spec = DomainSpec::rectangle(1.0, 0.6);
        spec.symmetries.push(SymmetryTag::Rotation(4));
        assert!(matches!(build_domain(&spec), Err(Error::SymmetryFails(_))));
        let mut sq = DomainSpec::rectangle(0.5, 0.5);
        sq.symmetries.push(SymmetryTag::Rotation(4));
        assert!(build_domain(&sq).is_ok());
        let mut tri = DomainSpec::polygon(vec![[-1.0, -1.0], [2.0, -1.0], [-1.0, 2.0]]);
        tri.symmetries.push(SymmetryTag::X1Axis);
        assert!(build_domain(&tri).is_err());
    }

    #[test]
    fn bad_polygons_rejected() {
        let cw = DomainSpec::polygon(vec![[-1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [1.0, -1.0]]);
        assert!(matches!(build_domain(&cw), Err(Error::BadPolygon)));
        let bow = DomainSpec::polygon(vec![[-1.0, -1.0], [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0]]);
        assert!(build_domain(&bow).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = DomainSpec::rectangle(1.0, 0.6);
        let s = serde_json::to_string(&spec).unwrap();
        let back: DomainSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
        let raw = r#"{"shape":{"type":"disk","radius":1.0},"symmetries":["x1-axis",{"rotation":3}]}"#;
        let d: DomainSpec = serde_json::from_str(raw).unwrap();
        assert_eq!(d.symmetries[1], SymmetryTag::Rotation(3));
        let bad = r#"{"shape":{"type":"disk","radius":1.0,"extra":2}}"#;
        assert!(serde_json::from_str::<DomainSpec>(bad).is_err());
    }
}
