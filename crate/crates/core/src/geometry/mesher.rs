use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use super::crack::CrackGeometry;
use super::{cross, dist, sub, Boundary, Domain, SymmetryTag};
use crate::error::{Error, Result};

/// Controls for [`generate_mesh`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshParams {
    pub h: f64,
    #[serde(default = "default_grading")]
    pub grading_exponent: f64,
    /// Length scale of the grading law; the domain diameter when absent.
    #[serde(default)]
    pub grading_length: Option<f64>,
    /// Element size grows like `h·max(1, far_growth·|x|)` away from the origin.
    #[serde(default)]
    pub far_growth: f64,
    /// Extra constraint circles centred at the origin.
    #[serde(default)]
    pub circles: Vec<f64>,
    /// Mesh the upper half and mirror it (crack along the x₁-axis only).
    #[serde(default)]
    pub symmetric: bool,
}

fn default_grading() -> f64 {
    2.0
}

impl MeshParams {
    pub fn new(h: f64) -> Self {
        Self { h, grading_exponent: 2.0, grading_length: None, far_growth: 0.0, circles: Vec::new(), symmetric: false }
    }

    pub fn symmetric(mut self, on: bool) -> Self {
        self.symmetric = on;
        self
    }
}

/// Triangulation of the slit domain; nodes on the crack (except the tip) are
/// duplicated into a plus copy and a minus copy.
#[derive(Clone, Debug, PartialEq)]
pub struct CrackedMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// `[plus, minus]`, ordered from the boundary exit towards the tip.
    pub crack_pairs: Vec<[usize; 2]>,
    /// Signed coordinate of each pair along the crack direction.
    pub crack_params: Vec<f64>,
    pub tip_node: Option<usize>,
    pub dirichlet_nodes: Vec<usize>,
    /// Indices into `crack_pairs` of pairs on the segment between origin and pole.
    pub s_a_pairs: Vec<usize>,
    pub h: f64,
    pub grading_exponent: f64,
    pub crack: Option<CrackGeometry>,
}

impl CrackedMesh {
    pub fn n_nodes(&self) -> usize {
        self.vertices.len()
    }

    /// Index of the pair sitting at the origin, when the pole is away from it.
    pub fn origin_pair(&self) -> Option<usize> {
        self.crack_params.iter().position(|s| *s == 0.0)
    }

    /// Node at the origin (the plus copy when it is duplicated).
    pub fn origin_node(&self) -> Option<usize> {
        match self.origin_pair() {
            Some(i) => Some(self.crack_pairs[i][0]),
            None => self.vertices.iter().position(|p| p[0] == 0.0 && p[1] == 0.0),
        }
    }

    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut e: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|t| [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]])
            .map(|[a, b]| [a.min(b), a.max(b)])
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.triangles.len() as i64
    }

    pub fn min_angle(&self) -> f64 {
        self.triangles.iter().map(|t| triangle_min_angle(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]])).fold(PI, f64::min)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * cross(sub(self.vertices[b], self.vertices[a]), sub(self.vertices[c], self.vertices[a]))
    }

    /// Node permutation realising `(x₁, x₂) ↦ (x₁, −x₂)`, if the mesh is invariant
    /// under it. Plus and minus copies of a crack node are exchanged.
    pub fn reflection_permutation(&self) -> Option<Vec<usize>> {
        let key = |p: [f64; 2]| ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits());
        let mut partner = vec![usize::MAX; self.n_nodes()];
        for &[p, m] in &self.crack_pairs {
            partner[p] = m;
            partner[m] = p;
        }
        let mut by_pos: HashMap<(u64, u64), usize> = HashMap::new();
        for (i, p) in self.vertices.iter().enumerate() {
            if partner[i] == usize::MAX {
                by_pos.insert(key(*p), i);
            }
        }
        let mut perm = vec![0; self.n_nodes()];
        for (i, p) in self.vertices.iter().enumerate() {
            // A crack node maps to the copy on the opposite side.
            perm[i] = if partner[i] != usize::MAX { partner[i] } else { *by_pos.get(&key([p[0], -p[1]]))? };
        }
        let mut tris: Vec<[usize; 3]> = self.triangles.iter().map(|t| sorted3(*t)).collect();
        tris.sort_unstable();
        for t in &self.triangles {
            let m = sorted3([perm[t[0]], perm[t[1]], perm[t[2]]]);
            tris.binary_search(&m).ok()?;
        }
        Some(perm)
    }
}

fn sorted3(mut t: [usize; 3]) -> [usize; 3] {
    t.sort_unstable();
    t
}

fn triangle_min_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ang = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        let u = sub(q, p);
        let v = sub(r, p);
        cross(u, v).abs().atan2(u[0] * v[0] + u[1] * v[1])
    };
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b))
}

/// Target element size as a function of position.
struct SizeField {
    h: f64,
    exponent: f64,
    length: f64,
    d_min: f64,
    growth: f64,
    centers: Vec<[f64; 2]>,
    /// Points of small local feature size `s`; the size grows like `s + d/2` away from them.
    features: Vec<([f64; 2], f64)>,
}

impl SizeField {
    fn far(&self, r: f64) -> f64 {
        self.h * (self.growth * r).max(1.0)
    }

    fn graded(&self, d: f64) -> f64 {
        self.h * (d.max(self.d_min) / self.length).powf(1.0 - 1.0 / self.exponent)
    }

    fn at(&self, p: [f64; 2]) -> f64 {
        let mut s = self.far(p[0].hypot(p[1]));
        for c in &self.centers {
            s = s.min(self.graded(dist(p, *c)));
        }
        for (q, fs) in &self.features {
            s = s.min(fs + 0.5 * dist(p, *q));
        }
        s
    }
}

/// Planar straight-line graph of constraint points and edges.
#[derive(Default)]
struct Pslg {
    pts: Vec<[f64; 2]>,
    index: HashMap<(u64, u64), usize>,
    edges: Vec<[usize; 2]>,
}

impl Pslg {
    fn add_point(&mut self, p: [f64; 2]) -> usize {
        let p = [p[0] + 0.0, p[1] + 0.0];
        let key = (p[0].to_bits(), p[1].to_bits());
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.pts.push(p);
        self.index.insert(key, self.pts.len() - 1);
        self.pts.len() - 1
    }

    fn add_polyline(&mut self, pts: &[[f64; 2]]) {
        for w in pts.windows(2) {
            let (a, b) = (self.add_point(w[0]), self.add_point(w[1]));
            if a != b {
                self.edges.push([a, b]);
            }
        }
    }
}

/// Smooth clustering map of [0, 1] onto itself with zero slope at both ends.
fn cluster(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

/// Interior points of a curve `c(τ)`, τ ∈ [0, 1], placed so that consecutive
/// spacing follows the size field. `speed` is |dc/dτ| (constant).
fn graded_curve(c: &dyn Fn(f64) -> [f64; 2], speed: f64, size: &SizeField) -> Vec<[f64; 2]> {
    const N: usize = 4096;
    let taus: Vec<f64> = (0..=N).map(|i| cluster(i as f64 / N as f64)).collect();
    let dens: Vec<f64> = taus.iter().map(|&t| 1.0 / size.at(c(t))).collect();
    let mut cum = vec![0.0; N + 1];
    for i in 0..N {
        cum[i + 1] = cum[i] + 0.5 * (dens[i] + dens[i + 1]) * (taus[i + 1] - taus[i]) * speed;
    }
    let total = cum[N];
    let m = (total - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(m.saturating_sub(1));
    let mut i = 0;
    for j in 1..m {
        let target = total * j as f64 / m as f64;
        while cum[i + 1] < target {
            i += 1;
        }
        let f = (target - cum[i]) / (cum[i + 1] - cum[i]);
        out.push(c(taus[i] + f * (taus[i + 1] - taus[i])));
    }
    out
}

fn segment_points(a: [f64; 2], b: [f64; 2], size: &SizeField) -> Vec<[f64; 2]> {
    let d = sub(b, a);
    let mut pts = vec![a];
    pts.extend(graded_curve(&|t| [a[0] + t * d[0], a[1] + t * d[1]], dist(a, b), size));
    pts.push(b);
    pts
}

/// Arc of radius `r` from angle `t0` to `t1 > t0` with prescribed endpoint coordinates.
fn arc_points(r: f64, t0: f64, t1: f64, a: [f64; 2], b: [f64; 2], size: &SizeField) -> Vec<[f64; 2]> {
    let mut pts = vec![a];
    pts.extend(graded_curve(
        &|t| {
            let th = t0 + t * (t1 - t0);
            [r * th.cos(), r * th.sin()]
        },
        r * (t1 - t0),
        size,
    ));
    pts.push(b);
    pts
}

/// Distance from the origin to the boundary along direction `e`.
fn ray_distance(domain: &Domain, e: [f64; 2]) -> f64 {
    match &domain.boundary {
        Boundary::Circle { radius } => *radius,
        Boundary::Polygon(v) => {
            let n = v.len();
            let mut best = f64::INFINITY;
            for i in 0..n {
                let (p, q) = (v[i], v[(i + 1) % n]);
                let d = sub(q, p);
                let den = cross(e, d);
                if den.abs() < 1e-14 {
                    continue;
                }
                let s = cross(p, d) / den;
                let u = cross(p, e) / den;
                if s > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
                    best = best.min(s);
                }
            }
            best
        }
    }
}

/// Polygon loop with extra points spliced into the edges they lie on.
fn splice(v: &[[f64; 2]], extra: &[[f64; 2]], tol: f64) -> Vec<[f64; 2]> {
    let n = v.len();
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        out.push(a);
        let l = dist(a, b);
        let mut on: Vec<(f64, [f64; 2])> = extra
            .iter()
            .filter(|p| cross(sub(b, a), sub(**p, a)).abs() / l <= tol && dist(**p, a) > tol && dist(**p, b) > tol)
            .map(|p| ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]), *p))
            .filter(|(s, _)| *s > 0.0 && *s < l * l)
            .collect();
        on.sort_by(|x, y| x.0.total_cmp(&y.0));
        out.extend(on.into_iter().map(|x| x.1));
    }
    out
}

/// Projects a point lying on a polygon edge exactly onto it (coordinates of
/// axis-aligned edges are copied). Circles are left alone.
fn snap_to_boundary(domain: &Domain, p: [f64; 2]) -> [f64; 2] {
    let Boundary::Polygon(v) = &domain.boundary else {
        return p;
    };
    let n = v.len();
    let mut best = (f64::INFINITY, p);
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let ab = sub(b, a);
        let l2 = ab[0] * ab[0] + ab[1] * ab[1];
        let s = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0);
        let mut q = [a[0] + s * ab[0], a[1] + s * ab[1]];
        if a[0] == b[0] {
            q[0] = a[0];
        }
        if a[1] == b[1] {
            q[1] = a[1];
        }
        let d = dist(p, q);
        if d < best.0 {
            best = (d, q);
        }
    }
    best.1
}

/// Candidate interior points on concentric rings around `center`.
fn rings(center: [f64; 2], sigma: &dyn Fn(f64) -> f64, r_start: f64, r_max: f64, phase: f64, out: &mut Vec<[f64; 2]>) {
    let mut r = r_start;
    let mut ring = 0usize;
    while r < r_max {
        let s = sigma(r);
        let n = ((2.0 * PI * r / s).ceil() as usize).max(3);
        let off = phase + if ring % 2 == 1 { PI / n as f64 } else { 0.0 } + PI / n as f64 * 0.5;
        for j in 0..n {
            let th = off + 2.0 * PI * j as f64 / n as f64;
            out.push([center[0] + r * th.cos(), center[1] + r * th.sin()]);
        }
        let step = 0.87 * sigma(r + 0.43 * s);
        r += step;
        ring += 1;
    }
}

/// Multi-resolution hash grid for "is there an accepted point within ρ" queries.
struct PointGrid {
    base: f64,
    levels: usize,
    cells: Vec<HashMap<(i64, i64), Vec<u32>>>,
    pts: Vec<[f64; 2]>,
}

impl PointGrid {
    fn new(rho_max: f64, rho_min: f64) -> Self {
        let levels = ((rho_max / rho_min).log2().ceil().max(0.0) as usize) + 1;
        Self { base: rho_max, levels, cells: vec![HashMap::new(); levels], pts: Vec::new() }
    }

    fn cell(&self, l: usize) -> f64 {
        self.base / (1u64 << l) as f64
    }

    fn insert(&mut self, p: [f64; 2]) {
        let id = self.pts.len() as u32;
        self.pts.push(p);
        for l in 0..self.levels {
            let c = self.cell(l);
            let key = ((p[0] / c).floor() as i64, (p[1] / c).floor() as i64);
            self.cells[l].entry(key).or_default().push(id);
        }
    }

    fn any_within(&self, p: [f64; 2], rho: f64) -> bool {
        let mut l = 0;
        while l + 1 < self.levels && self.cell(l + 1) >= rho {
            l += 1;
        }
        let c = self.cell(l);
        let (ix, iy) = ((p[0] / c).floor() as i64, (p[1] / c).floor() as i64);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = self.cells[l].get(&(ix + dx, iy + dy)) {
                    if v.iter().any(|&i| dist(self.pts[i as usize], p) < rho) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Upper bound on `area/h²` accepted by the mesher.
pub const MAX_ELEMENTS: f64 = 2e7;

/// Builds a graded triangulation of the domain slit along `crack`.
pub fn generate_mesh(domain: &Domain, crack: Option<&CrackGeometry>, params: &MeshParams) -> Result<CrackedMesh> {
    let h = params.h;
    if !(h > 0.0) || !(params.grading_exponent >= 1.0) {
        return Err(Error::Invalid(format!("mesh size {h} and grading {} out of range", params.grading_exponent)));
    }
    if domain.area / (h * h) > MAX_ELEMENTS {
        return Err(Error::Invalid(format!("mesh size {h} would need more than {MAX_ELEMENTS:.0e} elements")));
    }
    let length = params.grading_length.unwrap_or(domain.diam);
    let mut centers = Vec::new();
    if let Some(c) = crack {
        centers.push([0.0, 0.0]);
        if c.t_pole > 0.0 {
            centers.push(c.pole());
        }
    }
    let mut size = SizeField {
        h,
        exponent: params.grading_exponent,
        length,
        d_min: length * (h / length).powf(params.grading_exponent),
        growth: params.far_growth,
        centers,
        features: Vec::new(),
    };
    let sym = params.symmetric;
    if sym {
        let ok_alpha = crack.map(|c| c.alpha == 0.0 || c.alpha == PI).unwrap_or(true);
        if !domain.has_symmetry(SymmetryTag::X1Axis) || !ok_alpha {
            return Err(Error::Invalid("symmetric meshing needs an x1-axis symmetric domain and a horizontal crack".into()));
        }
    }
    let tol = 1e-12 * domain.diam;
    let r_bound = match &domain.boundary {
        Boundary::Circle { radius } => *radius,
        Boundary::Polygon(v) => v.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max),
    };
    let circles: Vec<f64> = params.circles.iter().copied().filter(|r| *r > 0.0 && *r < r_bound).collect();

    // Line carrying the crack (or, in symmetric mode, the whole axis).
    let e = crack.map(|c| c.direction()).unwrap_or([1.0, 0.0]);
    let line_point = |s: f64| [s * e[0], s * e[1]];
    let mut pslg = Pslg::default();
    let mut breaks: Vec<f64> = Vec::new();
    let (s_lo, s_hi);
    if let Some(c) = crack {
        s_lo = -c.exit_distance;
        s_hi = if sym { ray_distance(domain, e) } else { c.t_pole };
        breaks.extend([s_lo, 0.0, c.t_pole, s_hi]);
    } else if sym {
        s_lo = -ray_distance(domain, [-1.0, 0.0]);
        s_hi = ray_distance(domain, [1.0, 0.0]);
        breaks.extend([s_lo, 0.0, s_hi]);
    } else {
        s_lo = 0.0;
        s_hi = 0.0;
    }
    for r in &circles {
        breaks.extend([-r, *r]);
    }
    breaks.retain(|s| *s >= s_lo && *s <= s_hi);
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    // The exit is shared by the crack and the boundary, so it is snapped onto
    // its boundary edge; a point 1 ulp off a straight edge breeds needles.
    let exit = crack.map(|c| snap_to_boundary(domain, line_point(-c.exit_distance)));
    // Short boundary pieces (an exit close to a corner) set the local size.
    if let (Boundary::Polygon(v), false) = (&domain.boundary, sym) {
        let lp = splice(v, &exit.into_iter().collect::<Vec<_>>(), tol);
        let n = lp.len();
        for i in 0..n {
            let piece = dist(lp[(i + n - 1) % n], lp[i]).min(dist(lp[i], lp[(i + 1) % n]));
            if piece < h {
                size.features.push((lp[i], piece));
            }
        }
    }
    // So does a short crack segment between origin and pole.
    if let Some(c) = crack.filter(|c| c.t_pole > 0.0 && c.t_pole < size.d_min.max(h)) {
        size.features.push(([0.0, 0.0], c.t_pole));
        size.features.push((c.pole(), c.t_pole));
    }
    let line_nodes: Vec<[f64; 2]> = breaks
        .iter()
        .map(|s| match (crack, exit) {
            (Some(c), Some(x)) if *s == -c.exit_distance => x,
            _ => line_point(*s),
        })
        .collect();
    for w in line_nodes.windows(2) {
        pslg.add_polyline(&segment_points(w[0], w[1], &size));
    }

    // Outer boundary (upper half in symmetric mode).
    match &domain.boundary {
        Boundary::Circle { radius } => {
            let r = *radius;
            if sym {
                let (a, b) = ([r, 0.0], [-r, 0.0]);
                pslg.add_polyline(&arc_points(r, 0.0, PI, a, b, &size));
            } else {
                let (t0, start) = match (crack, exit) {
                    (Some(c), Some(x)) => (c.alpha + PI, x),
                    _ => (0.0, [r, 0.0]),
                };
                pslg.add_polyline(&arc_points(r, t0, t0 + 2.0 * PI, start, start, &size));
            }
        }
        Boundary::Polygon(v) => {
            let loop_pts = if sym { upper_half(v) } else { splice(v, &exit.into_iter().collect::<Vec<_>>(), tol) };
            let n = loop_pts.len();
            let closed = !sym;
            let count = if closed { n } else { n - 1 };
            for i in 0..count {
                pslg.add_polyline(&segment_points(loop_pts[i], loop_pts[(i + 1) % n], &size));
            }
        }
    }
    for r in &circles {
        if sym {
            pslg.add_polyline(&arc_points(*r, 0.0, PI, [*r, 0.0], [-r, 0.0], &size));
        } else {
            let t0 = crack.map(|c| c.alpha + PI).unwrap_or(0.0);
            let start = if crack.is_some() { line_point(-r) } else { [*r, 0.0] };
            pslg.add_polyline(&arc_points(*r, t0, t0 + 2.0 * PI, start, start, &size));
        }
    }

    // A frame around the domain turns the exterior into an ordinary region, so
    // refinement never meets flat hull faces along a slanted boundary; the
    // exterior triangles are dropped afterwards.
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pslg.pts {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let margin = 2.0 * h;
    let frame = [[lo[0] - margin, lo[1] - margin], [hi[0] + margin, lo[1] - margin], [hi[0] + margin, hi[1] + margin], [lo[0] - margin, hi[1] + margin]];
    for i in 0..4 {
        pslg.add_polyline(&segment_points(frame[i], frame[(i + 1) % 4], &size));
    }

    // Interior candidates.
    let mut cand: Vec<[f64; 2]> = Vec::new();
    let phase = crack.map(|c| c.alpha).unwrap_or(0.0);
    let graded = crack.is_some();
    let origin_sigma = |r: f64| if graded { size.graded(r).min(size.far(r)) } else { size.far(r) };
    if !graded {
        cand.push([0.0, 0.0]);
    }
    rings([0.0, 0.0], &origin_sigma, 0.6 * origin_sigma(0.0), r_bound, phase, &mut cand);
    if let Some(c) = crack.filter(|c| c.t_pole > 0.0) {
        let pole_sigma = |r: f64| size.graded(r).min(h);
        let r_max = (length * 1.0).min(2.0 * r_bound);
        let mut r_stop = size.d_min;
        while size.graded(r_stop) < h && r_stop < r_max {
            r_stop *= 1.1;
        }
        rings(c.pole(), &pole_sigma, 0.6 * pole_sigma(0.0), r_stop, phase, &mut cand);
    }
    let mut keyed: Vec<(f64, usize)> = cand
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let s = size.at(**p);
            domain.contains(**p) && domain.distance_to_boundary(**p) >= 0.3 * s && (!sym || p[1] > 0.3 * s)
        })
        .map(|(i, p)| (size.at(*p), i))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let rho_max = keyed.iter().map(|k| k.0).fold(h, f64::max);
    let rho_min = size.d_min.min(h) * 0.5;
    let mut grid = PointGrid::new(rho_max, rho_min);
    for p in &pslg.pts {
        grid.insert(*p);
    }
    let mut interior = Vec::new();
    for (s, i) in keyed {
        let p = cand[i];
        if !grid.any_within(p, 0.75 * s) {
            grid.insert(p);
            interior.push(p);
        }
    }

    // Constrained Delaunay triangulation and quality refinement.
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mut handles = Vec::with_capacity(pslg.pts.len());
    for p in &pslg.pts {
        handles.push(cdt.insert(Point2::new(p[0], p[1])).map_err(|e| Error::MeshQuality(format!("{e:?}")))?);
    }
    for [a, b] in &pslg.edges {
        cdt.add_constraint(handles[*a], handles[*b]);
    }
    for p in &interior {
        cdt.insert(Point2::new(p[0], p[1])).map_err(|e| Error::MeshQuality(format!("{e:?}")))?;
    }
    let base_vertices = cdt.num_vertices();
    let finest = size.features.iter().map(|f| f.1).fold(size.d_min, f64::min);
    let mut refine = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(25.0))
        .with_min_required_area(0.05 * finest * finest)
        .with_max_additional_vertices(base_vertices * 4 + 1000);
    if params.far_growth == 0.0 {
        refine = refine.with_max_allowed_area(0.8 * h * h);
    }
    cdt.refine(refine);

    // Vertices lying on constraint edges of the crack line.
    let line_tol = 1e-11 * domain.diam;
    let on_line = |p: [f64; 2]| cross(e, p).abs() <= line_tol;
    let mut on_crack_line = vec![false; cdt.num_vertices()];
    if crack.is_some() || sym {
        for edge in cdt.undirected_edges() {
            if !edge.is_constraint_edge() {
                continue;
            }
            let [a, b] = edge.vertices();
            let (pa, pb) = (a.position(), b.position());
            if on_line([pa.x, pa.y]) && on_line([pb.x, pb.y]) {
                on_crack_line[a.fix().index()] = true;
                on_crack_line[b.fix().index()] = true;
            }
        }
    }

    let mut pos: Vec<[f64; 2]> = cdt.vertices().map(|v| [v.position().x, v.position().y]).collect();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for f in cdt.inner_faces() {
        let vs = f.vertices().map(|v| v.fix().index());
        let c = [
            (pos[vs[0]][0] + pos[vs[1]][0] + pos[vs[2]][0]) / 3.0,
            (pos[vs[0]][1] + pos[vs[1]][1] + pos[vs[2]][1]) / 3.0,
        ];
        // Nearly collinear boundary points (a spliced exit point, say) can leave
        // a sliver of negligible area; it carries no element and is dropped.
        let (a, b, d) = (pos[vs[0]], pos[vs[1]], pos[vs[2]]);
        let longest = dist(a, b).max(dist(b, d)).max(dist(d, a));
        let sliver = cross(sub(b, a), sub(d, a)).abs() <= 1e-10 * longest * longest;
        if !sliver && domain.contains(c) && (!sym || c[1] > 0.0) {
            tris.push(vs);
        }
    }
    if sym {
        let n0 = pos.len();
        let mut mirror = vec![usize::MAX; n0];
        for i in 0..n0 {
            if pos[i][1] == 0.0 {
                mirror[i] = i;
            }
        }
        let used = used_nodes(&tris, n0);
        for i in 0..n0 {
            if mirror[i] == usize::MAX && used[i] {
                mirror[i] = pos.len();
                pos.push([pos[i][0], -pos[i][1]]);
                on_crack_line.push(false);
            }
        }
        let m = tris.len();
        for k in 0..m {
            let [a, b, c] = tris[k];
            tris.push([mirror[a], mirror[c], mirror[b]]);
        }
    }

    // Compact to used vertices, preserving order.
    let used = used_nodes(&tris, pos.len());
    let mut remap = vec![usize::MAX; pos.len()];
    let mut vertices = Vec::new();
    let mut crack_flag = Vec::new();
    for i in 0..pos.len() {
        if used[i] {
            remap[i] = vertices.len();
            vertices.push(pos[i]);
            crack_flag.push(on_crack_line[i]);
        }
    }
    for t in tris.iter_mut() {
        *t = t.map(|i| remap[i]);
        let area = 0.5 * cross(sub(vertices[t[1]], vertices[t[0]]), sub(vertices[t[2]], vertices[t[0]]));
        if area < 0.0 {
            t.swap(1, 2);
        } else if area == 0.0 {
            return Err(Error::MeshQuality("zero-area triangle".into()));
        }
    }

    // Outer boundary: edges with a single adjacent triangle.
    let mut edge_count: HashMap<[usize; 2], u32> = HashMap::new();
    for t in &tris {
        for [a, b] in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
            *edge_count.entry([a.min(b), a.max(b)]).or_default() += 1;
        }
    }
    let mut is_boundary = vec![false; vertices.len()];
    for (e, c) in &edge_count {
        if *c == 1 {
            is_boundary[e[0]] = true;
            is_boundary[e[1]] = true;
        }
    }

    // Duplicate crack nodes.
    let mut crack_pairs = Vec::new();
    let mut crack_params = Vec::new();
    let mut tip_node = None;
    if let Some(c) = crack {
        let mut nodes: Vec<(f64, usize)> = (0..vertices.len())
            .filter(|&i| crack_flag[i])
            .map(|i| (c.param(vertices[i]), i))
            .filter(|(s, _)| *s <= c.t_pole + line_tol)
            .collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let tip = nodes.last().filter(|(s, _)| (s - c.t_pole).abs() <= line_tol).map(|x| x.1);
        let tip = tip.ok_or_else(|| Error::MeshQuality("pole is not a mesh node".into()))?;
        tip_node = Some(tip);
        let mut minus_of = vec![usize::MAX; vertices.len()];
        for &(s, i) in &nodes[..nodes.len() - 1] {
            let m = vertices.len();
            vertices.push(vertices[i]);
            is_boundary.push(is_boundary[i]);
            minus_of[i] = m;
            crack_pairs.push([i, m]);
            crack_params.push(if vertices[i] == [0.0, 0.0] { 0.0 } else { s });
        }
        for t in tris.iter_mut() {
            if t.iter().all(|&i| minus_of[i] == usize::MAX) {
                continue;
            }
            let cen = [
                (vertices[t[0]][0] + vertices[t[1]][0] + vertices[t[2]][0]) / 3.0,
                (vertices[t[0]][1] + vertices[t[1]][1] + vertices[t[2]][1]) / 3.0,
            ];
            if c.side(cen) < 0.0 {
                for i in t.iter_mut() {
                    if minus_of[*i] != usize::MAX {
                        *i = minus_of[*i];
                    }
                }
            }
        }
    }
    let dirichlet_nodes: Vec<usize> = (0..vertices.len()).filter(|&i| is_boundary[i]).collect();
    let s_a_pairs = (0..crack_pairs.len()).filter(|&i| crack_params[i] >= 0.0).collect();
    let mesh = CrackedMesh {
        vertices,
        triangles: tris,
        crack_pairs,
        crack_params,
        tip_node,
        dirichlet_nodes,
        s_a_pairs,
        h,
        grading_exponent: params.grading_exponent,
        crack: crack.copied(),
    };

    let mut input_angle = domain.min_corner_angle();
    if let Some(c) = crack {
        let t = tangent_at_exit(domain, c);
        let a = cross(t, c.direction()).abs().asin();
        input_angle = input_angle.min(a);
    }
    let threshold = (20f64.to_radians()).min(0.99 * input_angle);
    let q = mesh.min_angle();
    if q < threshold {
        let worst = (0..mesh.triangles.len())
            .min_by(|&a, &b| {
                let angle = |t: usize| triangle_min_angle(mesh.vertices[mesh.triangles[t][0]], mesh.vertices[mesh.triangles[t][1]], mesh.vertices[mesh.triangles[t][2]]);
                angle(a).total_cmp(&angle(b))
            })
            .map(|t| mesh.triangles[t].map(|i| mesh.vertices[i]))
            .unwrap_or_default();
        return Err(Error::MeshQuality(format!("minimum angle {:.2}° below {:.2}° at triangle {worst:?}", q.to_degrees(), threshold.to_degrees())));
    }
    if mesh.euler_characteristic() != 1 {
        return Err(Error::MeshQuality(format!("slit domain is not simply connected (χ = {})", mesh.euler_characteristic())));
    }
    Ok(mesh)
}

fn used_nodes(tris: &[[usize; 3]], n: usize) -> Vec<bool> {
    let mut used = vec![false; n];
    for t in tris {
        for &i in t {
            used[i] = true;
        }
    }
    used
}

/// Unit tangent of the boundary at the crack exit point.
fn tangent_at_exit(domain: &Domain, c: &CrackGeometry) -> [f64; 2] {
    let x = c.exit();
    match &domain.boundary {
        Boundary::Circle { radius } => [-x[1] / radius, x[0] / radius],
        Boundary::Polygon(v) => {
            let n = v.len();
            let mut best = (f64::INFINITY, [1.0, 0.0]);
            for i in 0..n {
                let (a, b) = (v[i], v[(i + 1) % n]);
                let l = dist(a, b);
                let d = cross(sub(b, a), sub(x, a)).abs() / l;
                if d < best.0 {
                    best = (d, [(b[0] - a[0]) / l, (b[1] - a[1]) / l]);
                }
            }
            best.1
        }
    }
}

/// Upper half (x₂ ≥ 0) of an x₁-symmetric polygon as an open chain from the
/// right axis crossing, counterclockwise, to the left axis crossing.
fn upper_half(v: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = v.len();
    let mut clipped: Vec<[f64; 2]> = Vec::new();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if a[1] >= 0.0 {
            clipped.push(if a[1] == 0.0 { [a[0], 0.0] } else { a });
        }
        if (a[1] > 0.0 && b[1] < 0.0) || (a[1] < 0.0 && b[1] > 0.0) {
            let t = a[1] / (a[1] - b[1]);
            clipped.push([a[0] + t * (b[0] - a[0]), 0.0]);
        }
    }
    let m = clipped.len();
    let right = (0..m).filter(|&i| clipped[i][1] == 0.0).max_by(|&i, &j| clipped[i][0].total_cmp(&clipped[j][0])).unwrap_or(0);
    let mut chain = Vec::new();
    let mut i = right;
    loop {
        chain.push(clipped[i]);
        if chain.len() > 1 && clipped[i][1] == 0.0 {
            break;
        }
        i = (i + 1) % m;
        if i == right {
            break;
        }
    }
    chain
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, insert_crack, DomainSpec};

    fn disk_mesh(alpha: f64, t: f64, h: f64, sym: bool) -> CrackedMesh {
        let d = build_domain(&DomainSpec::disk(1.0)).unwrap();
        let c = insert_crack(&d, alpha, t).unwrap();
        generate_mesh(&d, Some(&c), &MeshParams::new(h).symmetric(sym)).unwrap()
    }

    fn check_invariants(m: &CrackedMesh) {
        assert_eq!(m.euler_characteristic(), 1);
        assert!(m.min_angle() >= 20f64.to_radians() * 0.999);
        for &[p, q] in &m.crack_pairs {
            assert_eq!(m.vertices[p], m.vertices[q]);
        }
        // No triangle references both copies of any crack node.
        let mut side = vec![0i8; m.n_nodes()];
        for &[p, q] in &m.crack_pairs {
            side[p] = 1;
            side[q] = -1;
        }
        for t in &m.triangles {
            let has_plus = t.iter().any(|&i| side[i] == 1);
            let has_minus = t.iter().any(|&i| side[i] == -1);
            assert!(!(has_plus && has_minus));
        }
        for i in 0..m.triangles.len() {
            assert!(m.triangle_area(i) > 0.0);
        }
    }

    #[test]
    fn slit_disk_is_simply_connected() {
        let m = disk_mesh(0.0, 0.3, 0.05, false);
        assert!(m.crack_pairs.len() >= 2);
        check_invariants(&m);
        let tip = m.tip_node.unwrap();
        assert_eq!(m.vertices[tip], [0.3, 0.0]);
        assert!(m.crack_pairs.iter().all(|p| p[0] != tip && p[1] != tip));
    }

    #[test]
    fn oblique_crack_and_limit_crack() {
        check_invariants(&disk_mesh(1.1, 0.2, 0.05, false));
        let m = disk_mesh(-2.0, 0.0, 0.05, false);
        check_invariants(&m);
        assert_eq!(m.vertices[m.tip_node.unwrap()], [0.0, 0.0]);
        assert!(m.s_a_pairs.is_empty());
    }

    #[test]
    fn crack_free_square() {
        let d = build_domain(&DomainSpec::rectangle(0.5, 0.5)).unwrap();
        let m = generate_mesh(&d, None, &MeshParams::new(0.1)).unwrap();
        assert!(m.crack_pairs.is_empty());
        check_invariants(&m);
    }

    #[test]
    fn deterministic() {
        let a = disk_mesh(0.4, 0.1, 0.06, false);
        let b = disk_mesh(0.4, 0.1, 0.06, false);
        assert_eq!(a, b);
    }

    #[test]
    fn refinement_doubles_crack_pairs() {
        let a = disk_mesh(0.0, 0.3, 0.08, false);
        let b = disk_mesh(0.0, 0.3, 0.04, false);
        assert!(b.crack_pairs.len() >= 2 * a.crack_pairs.len(), "{} {}", a.crack_pairs.len(), b.crack_pairs.len());
    }

    #[test]
    fn symmetric_mode_is_reflection_invariant() {
        let m = disk_mesh(0.0, 0.2, 0.05, true);
        check_invariants(&m);
        let perm = m.reflection_permutation().expect("mesh should be symmetric");
        for (i, &j) in perm.iter().enumerate() {
            assert_eq!(m.vertices[i][0], m.vertices[j][0]);
            assert_eq!(m.vertices[i][1], -m.vertices[j][1]);
        }
        let d = build_domain(&DomainSpec::rectangle(1.0, 0.6)).unwrap();
        let c = insert_crack(&d, 0.0, 0.1).unwrap();
        let r = generate_mesh(&d, Some(&c), &MeshParams::new(0.05).symmetric(true)).unwrap();
        check_invariants(&r);
        assert!(r.reflection_permutation().is_some());
    }

    #[test]
    fn absurd_size_rejected() {
        let d = build_domain(&DomainSpec::disk(1.0)).unwrap();
        assert!(matches!(generate_mesh(&d, None, &MeshParams::new(1e-6)), Err(Error::Invalid(_))));
    }

    #[test]
    fn tip_grading() {
        let m = disk_mesh(0.0, 0.3, 0.04, false);
        let tip = m.vertices[m.tip_node.unwrap()];
        // Longest edge touching a node at distance d from the pole.
        let mut near = 0.0f64;
        let mut far = 0.0f64;
        for [a, b] in m.edges() {
            let d = dist(m.vertices[a], tip).min(dist(m.vertices[b], tip));
            let l = dist(m.vertices[a], m.vertices[b]);
            if d < 0.01 {
                near = near.max(l);
            } else if d > 0.15 && dist(m.vertices[a], [0.0, 0.0]) > 0.15 {
                far = far.max(l);
            }
        }
        assert!(near < 0.3 * far, "near {near} far {far}");
    }
}
