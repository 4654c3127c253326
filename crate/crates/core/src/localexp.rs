//! Gauge helpers and the local expansion `v ≈ β f_α(t) r^{k/2} sin(k/2 (t − ω))`
//! of limit eigenfunctions at the origin.
//!
//! Sign convention: `β > 0` always, so `ω` is reported in `[0, 4π/k)`; the
//! value modulo `2π/k` (which only depends on the span of the eigenfunction) is
//! available through [`LocalExpansion::omega_mod`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CrackedMesh, Locator};
use crate::numeric::wrap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalExpansion {
    pub k: u32,
    pub beta: f64,
    pub omega: f64,
    /// Radii of the two sampling circles.
    pub radii: [f64; 2],
    /// Relative circle energy outside the dominant mode on the smaller circle.
    pub fit_residual: f64,
}

impl LocalExpansion {
    pub fn omega_mod(&self) -> f64 {
        wrap(self.omega, 2.0 * PI / self.k as f64)
    }

    /// One JSON line `{"k":…,"beta":…,"omega":…,"residual":…}`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({"k": self.k, "beta": self.beta, "omega": self.omega, "residual": self.fit_residual}).to_string()
    }

    /// Leading-order real field `β f_α(t) r^{k/2} sin(k/2 (t − ω))`.
    pub fn model(&self, alpha: f64, r: f64, t: f64) -> f64 {
        let t = wrap(t, 2.0 * PI);
        let k = self.k as f64;
        self.beta * f_alpha(alpha, t) * r.powf(k / 2.0) * (k / 2.0 * (t - self.omega)).sin()
    }
}

/// `+1` on `[0, α+π)`, `−1` on `[α+π, 2π)`, extended periodically.
pub fn f_alpha(alpha: f64, t: f64) -> f64 {
    if wrap(t, 2.0 * PI) < alpha + PI { 1.0 } else { -1.0 }
}

/// Real gauge field `f_α(t) Re(e^{−it/2} u)` of complex samples at angles `t`;
/// also returns the imaginary residue `‖Im(e^{−it/2} u)‖₂`.
pub fn gauge_to_real(samples: &[Complex64], angles: &[f64], alpha: f64, rel_tol: f64) -> Result<(Vec<f64>, f64)> {
    if samples.len() != angles.len() {
        return Err(Error::Shape(format!("{} samples, {} angles", samples.len(), angles.len())));
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut im2 = 0.0;
    let mut n2 = 0.0;
    for (u, &t) in samples.iter().zip(angles) {
        let t = wrap(t, 2.0 * PI);
        let g = Complex64::from_polar(1.0, -t / 2.0) * u;
        out.push(f_alpha(alpha, t) * g.re);
        im2 += g.im * g.im;
        n2 += u.norm_sqr();
    }
    let residue = im2.sqrt();
    if residue > rel_tol * n2.sqrt() {
        return Err(Error::NotReal(residue));
    }
    Ok((out, residue))
}

/// A real (gauge-transformed) field that can be sampled at points.
pub trait RealField {
    fn value(&self, p: [f64; 2]) -> Option<f64>;
}

/// Field given in polar coordinates with `t ∈ [0, 2π)`.
pub struct PolarField<F: Fn(f64, f64) -> f64>(pub F);

impl<F: Fn(f64, f64) -> f64> RealField for PolarField<F> {
    fn value(&self, p: [f64; 2]) -> Option<f64> {
        let r = p[0].hypot(p[1]);
        Some((self.0)(r, wrap(p[1].atan2(p[0]), 2.0 * PI)))
    }
}

/// P1 interpolant of nodal values on a cracked mesh.
pub struct NodalField<'a> {
    locator: &'a Locator<'a>,
    values: &'a [f64],
}

impl<'a> NodalField<'a> {
    pub fn new(locator: &'a Locator<'a>, values: &'a [f64]) -> Self {
        Self { locator, values }
    }
}

impl RealField for NodalField<'_> {
    fn value(&self, p: [f64; 2]) -> Option<f64> {
        self.locator.interpolate(self.values, p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub k_max: u32,
    pub samples: usize,
    /// Minimum circle-energy share of the dominant mode.
    pub dominance: f64,
    /// Amplitudes below this count as absent.
    pub beta_floor: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { k_max: 15, samples: 512, dominance: 0.95, beta_floor: 1e-10 }
    }
}

/// Fourier data of `f_α v` on one circle.
struct Circle {
    r: f64,
    /// `(A_k, B_k)` for `k = 1, 3, …`.
    coeffs: Vec<(f64, f64)>,
    total: f64,
}

fn sample_circle(field: &dyn RealField, alpha: f64, r: f64, opts: &ExtractOptions) -> Result<Circle> {
    let m = opts.samples.max(256);
    let dt = 2.0 * PI / m as f64;
    let nk = opts.k_max.div_ceil(2) as usize;
    let mut coeffs = vec![(0.0, 0.0); nk];
    let mut total = 0.0;
    for j in 0..m {
        // Offset by half a step so that no sample sits on the crack.
        let t = wrap(alpha + PI + (j as f64 + 0.5) * dt, 2.0 * PI);
        let p = [r * t.cos(), r * t.sin()];
        let v = field.value(p).ok_or(Error::PointOutside(p[0], p[1]))?;
        let w = f_alpha(alpha, t) * v;
        total += w * w;
        for (i, c) in coeffs.iter_mut().enumerate() {
            let k = (2 * i + 1) as f64;
            let (s, co) = (k * t / 2.0).sin_cos();
            c.0 += w * s;
            c.1 += w * co;
        }
    }
    let scale = dt / PI;
    for c in coeffs.iter_mut() {
        c.0 *= scale;
        c.1 *= scale;
    }
    Ok(Circle { r, coeffs, total: total * scale })
}

fn dominant(c: &Circle) -> (usize, f64) {
    c.coeffs
        .iter()
        .enumerate()
        .map(|(i, (a, b))| (i, if c.total > 0.0 { (a * a + b * b) / c.total } else { 0.0 }))
        .fold((0, -1.0), |best, x| if x.1 > best.1 { x } else { best })
}

/// Normalised mode coefficients `(Â_k, B̂_k)` extrapolated to `r → 0`.
fn extrapolated(c1: &Circle, c2: &Circle, i: usize) -> (f64, f64) {
    let k = (2 * i + 1) as f64;
    let n1 = c1.r.powf(k / 2.0);
    let n2 = c2.r.powf(k / 2.0);
    let rich = |x1: f64, x2: f64| crate::numeric::richardson(x2, x1, c2.r, c1.r, 2.0);
    (rich(c1.coeffs[i].0 / n1, c2.coeffs[i].0 / n2), rich(c1.coeffs[i].1 / n1, c2.coeffs[i].1 / n2))
}

fn expansion_from(k: u32, a: f64, b: f64, radii: [f64; 2], residual: f64) -> LocalExpansion {
    let beta = a.hypot(b);
    let kf = k as f64;
    // A = β cos(kω/2), B = −β sin(kω/2)
    let period = 4.0 * PI / kf;
    let mut omega = wrap(2.0 / kf * (-b).atan2(a), period);
    if period - omega < 1e-12 * period {
        omega = 0.0;
    }
    LocalExpansion { k, beta, omega, radii, fit_residual: residual }
}

/// Fits the local expansion of a real field from two circles of radii `r₁ < r₂`.
pub fn extract_expansion(field: &dyn RealField, alpha: f64, radii: [f64; 2], opts: &ExtractOptions) -> Result<LocalExpansion> {
    let [r1, r2] = radii;
    if !(r1 > 0.0 && r2 > r1) {
        return Err(Error::Invalid(format!("radii {r1}, {r2} must satisfy 0 < r1 < r2")));
    }
    let c1 = sample_circle(field, alpha, r1, opts)?;
    let c2 = sample_circle(field, alpha, r2, opts)?;
    let (i1, share) = dominant(&c1);
    if c1.total <= 0.0 || share < opts.dominance {
        return Err(Error::NoDominantMode(format!("largest share {share:.3} on r = {r1}")));
    }
    let (i2, _) = dominant(&c2);
    if i2 != i1 {
        return Err(Error::InconsistentOrder((2 * i1 + 1) as u32, (2 * i2 + 1) as u32));
    }
    let (a, b) = extrapolated(&c1, &c2, i1);
    let e = expansion_from((2 * i1 + 1) as u32, a, b, radii, 1.0 - share);
    if e.beta < opts.beta_floor {
        return Err(Error::NoDominantMode(format!("amplitude {:.3e} below floor", e.beta)));
    }
    Ok(e)
}

/// Alternatives for a basis of a double eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BasisCase {
    /// Both basis functions vanish to the same order with distinct phases.
    SameK { k: u32, phi: LocalExpansion, psi: LocalExpansion },
    /// One basis function vanishes to a strictly higher order.
    SplitK { k1: u32, k2: u32, phi1: LocalExpansion, phi2: LocalExpansion },
}

impl BasisCase {
    pub fn expansions(&self) -> [LocalExpansion; 2] {
        match self {
            BasisCase::SameK { phi, psi, .. } => [*phi, *psi],
            BasisCase::SplitK { phi1, phi2, .. } => [*phi1, *phi2],
        }
    }

    pub fn k(&self) -> u32 {
        match self {
            BasisCase::SameK { k, .. } => *k,
            BasisCase::SplitK { k1, .. } => *k1,
        }
    }
}

/// Canonical basis of a double cluster together with the combined nodal vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalPair {
    pub case: BasisCase,
    /// Row `i` holds the coefficients of output vector `i` in the inputs.
    pub rotation: [[f64; 2]; 2],
    pub vectors: [Vec<f64>; 2],
}

fn combine(c: [f64; 2], v1: &[f64], v2: &[f64]) -> Vec<f64> {
    v1.iter().zip(v2).map(|(a, b)| c[0] * a + c[1] * b).collect()
}

/// Splits an orthonormal pair spanning a double eigenspace into the basis
/// alternatives: a rotation that kills the lowest common mode reveals a
/// higher vanishing order (split), otherwise the pair is aligned so that the
/// first function has `ω = 0`.
pub fn canonicalize_pair(mesh: &CrackedMesh, v1: &[f64], v2: &[f64], alpha: f64, radii: [f64; 2], opts: &ExtractOptions) -> Result<CanonicalPair> {
    let loc = Locator::new(mesh, radii[0].max(mesh.h) * 0.5);
    let f1 = NodalField::new(&loc, v1);
    let f2 = NodalField::new(&loc, v2);
    let c = [
        [sample_circle(&f1, alpha, radii[0], opts)?, sample_circle(&f1, alpha, radii[1], opts)?],
        [sample_circle(&f2, alpha, radii[0], opts)?, sample_circle(&f2, alpha, radii[1], opts)?],
    ];
    let total = c[0][0].total + c[1][0].total;
    if !(total > 0.0) {
        return Err(Error::NoDominantMode("both vectors vanish on the sampling circle".into()));
    }
    // Lowest mode carrying a visible part of the pair's circle energy.
    let nk = c[0][0].coeffs.len();
    let low = (0..nk)
        .find(|&i| {
            let e: f64 = (0..2).map(|v| c[v][0].coeffs[i].0.powi(2) + c[v][0].coeffs[i].1.powi(2)).sum();
            e / total >= 0.05
        })
        .ok_or_else(|| Error::NoDominantMode("no mode carries energy".into()))?;
    let k = (2 * low + 1) as u32;
    let m: Vec<(f64, f64)> = (0..2).map(|v| extrapolated(&c[v][0], &c[v][1], low)).collect();
    // Smallest left singular vector of the 2×2 coefficient matrix.
    let g = [
        [m[0].0 * m[0].0 + m[0].1 * m[0].1, m[0].0 * m[1].0 + m[0].1 * m[1].1],
        [0.0, m[1].0 * m[1].0 + m[1].1 * m[1].1],
    ];
    let theta = 0.5 * (2.0 * g[0][1]).atan2(g[0][0] - g[1][1]);
    let cmax = [theta.cos(), theta.sin()];
    let cmin = [-theta.sin(), theta.cos()];
    let wmin = combine(cmin, v1, v2);
    let fmin = NodalField::new(&loc, &wmin);
    if let Ok(e2) = extract_expansion(&fmin, alpha, radii, opts) {
        if e2.k > k {
            let wmax = combine(cmax, v1, v2);
            let e1 = extract_expansion(&NodalField::new(&loc, &wmax), alpha, radii, opts)?;
            if e1.k == k {
                return Ok(CanonicalPair {
                    case: BasisCase::SplitK { k1: k, k2: e2.k, phi1: e1, phi2: e2 },
                    rotation: [cmax, cmin],
                    vectors: [wmax, wmin],
                });
            }
        }
    }
    // Same order: align the first function so that its B-coefficient vanishes.
    let n = m[0].1.hypot(m[1].1);
    let mut ca = if n > 0.0 { [m[1].1 / n, -m[0].1 / n] } else { [1.0, 0.0] };
    if ca[0] * m[0].0 + ca[1] * m[1].0 < 0.0 {
        ca = [-ca[0], -ca[1]];
    }
    let mut cb = [-ca[1], ca[0]];
    let phi_v = combine(ca, v1, v2);
    let mut psi_v = combine(cb, v1, v2);
    let phi = extract_expansion(&NodalField::new(&loc, &phi_v), alpha, radii, opts)?;
    let mut psi = extract_expansion(&NodalField::new(&loc, &psi_v), alpha, radii, opts)?;
    if psi.omega >= 2.0 * PI / psi.k as f64 {
        cb = [-cb[0], -cb[1]];
        psi_v.iter_mut().for_each(|x| *x = -*x);
        psi.omega -= 2.0 * PI / psi.k as f64;
    }
    Ok(CanonicalPair { case: BasisCase::SameK { k, phi, psi }, rotation: [ca, cb], vectors: [phi_v, psi_v] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_alpha_values() {
        assert_eq!(f_alpha(0.0, 0.0), 1.0);
        assert_eq!(f_alpha(0.0, 1.5 * PI), -1.0);
        for a in [-3.0, -1.0, -0.1] {
            assert_eq!(f_alpha(a, a), -1.0);
        }
        for a in [0.0, 1.0, PI] {
            assert_eq!(f_alpha(a, a), 1.0);
        }
    }

    #[test]
    fn gauge_of_real_profile() {
        let alpha = 0.7;
        let angles: Vec<f64> = (0..64).map(|j| 0.05 + j as f64 * 0.097).collect();
        let g: Vec<f64> = angles.iter().map(|t| (3.0 * t).cos() + 0.2).collect();
        let u: Vec<Complex64> = angles.iter().zip(&g).map(|(t, g)| Complex64::from_polar(*g, t / 2.0)).collect();
        let (v, res) = gauge_to_real(&u, &angles, alpha, 1e-12).unwrap();
        assert!(res < 1e-14);
        for ((v, g), t) in v.iter().zip(&g).zip(&angles) {
            assert!((v - f_alpha(alpha, *t) * g).abs() < 1e-14);
        }
        let bad: Vec<Complex64> = u.iter().map(|z| z * Complex64::i()).collect();
        assert!(gauge_to_real(&bad, &angles, alpha, 1e-10).is_err());
    }

    #[test]
    fn synthetic_mode_three() {
        for alpha in [0.0, 0.9, -2.0] {
            let f = PolarField(move |r: f64, t: f64| f_alpha(alpha, t) * r.powf(1.5) * (1.5 * t).sin());
            let e = extract_expansion(&f, alpha, [0.05, 0.1], &ExtractOptions::default()).unwrap();
            assert_eq!(e.k, 3);
            assert!((e.beta - 1.0).abs() < 1e-12 && e.omega.abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn sign_flip_shifts_phase() {
        let alpha = 0.3;
        let make = |c: f64| PolarField(move |r: f64, t: f64| c * f_alpha(alpha, t) * r.powf(2.5) * (2.5 * (t - 0.2)).sin());
        let o = ExtractOptions::default();
        let p = extract_expansion(&make(2.0), alpha, [0.05, 0.1], &o).unwrap();
        let n = extract_expansion(&make(-2.0), alpha, [0.05, 0.1], &o).unwrap();
        assert!((p.beta - 2.0).abs() < 1e-10 && (n.beta - 2.0).abs() < 1e-10);
        assert!((p.omega - 0.2).abs() < 1e-10);
        assert!((n.omega - (0.2 + 2.0 * PI / 5.0)).abs() < 1e-10);
        assert!((p.omega_mod() - n.omega_mod()).abs() < 1e-10);
    }

    #[test]
    fn no_dominant_mode() {
        let f = PolarField(|r: f64, t: f64| f_alpha(0.0, t) * (r.sqrt() * (t / 2.0).sin() + r.powf(1.5) * (1.5 * t).sin() * 10.0));
        assert!(extract_expansion(&f, 0.0, [0.1, 0.2], &ExtractOptions::default()).is_err());
        let zero = PolarField(|_: f64, _: f64| 0.0);
        assert!(extract_expansion(&zero, 0.0, [0.1, 0.2], &ExtractOptions::default()).is_err());
    }
}
