//! Closed-form half-integer Bessel functions and the exact spectrum of the
//! unit disk with the pole at the centre.
//!
//! Every eigenvalue is `z²` with `z` a positive zero of `J_{k/2}`, `k` odd, and
//! each one is double: the eigenspace is spanned by the functions
//! `u = B e^{it/2} J_{k/2}(√λ r) sin(kt/2)` and `v = −B e^{it/2} J_{k/2}(√λ r) cos(kt/2)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localexp::LocalExpansion;
use crate::numeric::integrate_adaptive;

/// One double eigenvalue of the disk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskMode {
    pub k: u32,
    pub n: u32,
    pub z: f64,
    pub lambda: f64,
    /// L²-normalisation constant of the eigenfunctions.
    pub b: f64,
    /// Leading coefficient of `r^{k/2}` at the origin.
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiskVariant {
    U,
    V,
}

/// `Γ(m/2 + 1)` for odd `m ≥ -1`.
fn gamma_half_plus_one(m: i32) -> f64 {
    // Γ(1/2) = √π, Γ(x+1) = xΓ(x)
    let mut g = PI.sqrt();
    let mut x = 0.5;
    while x < m as f64 / 2.0 + 1.0 - 1e-9 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Ascending series for `J_{m/2}(x)`, `m` odd and `m ≥ -1`.
pub fn bessel_half_series(m: i32, x: f64) -> f64 {
    let nu = m as f64 / 2.0;
    let q = -(x * x) / 4.0;
    let mut term = (x / 2.0).powf(nu) / gamma_half_plus_one(m);
    let mut sum = term;
    for j in 1..200 {
        let jf = j as f64;
        term *= q / (jf * (jf + nu));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Forward recursion for `J_{m/2}(x)`, seeded by the elementary forms of `J_{±1/2}`.
pub fn bessel_half_recursion(m: i32, x: f64) -> f64 {
    let s = (2.0 / (PI * x)).sqrt();
    let jm = s * x.cos();
    let j = s * x.sin();
    if m == -1 {
        return jm;
    }
    let (mut prev, mut cur) = (jm, j);
    let mut nu = 0.5;
    for _ in 0..(m - 1) / 2 {
        let next = 2.0 * nu / x * cur - prev;
        prev = cur;
        cur = next;
        nu += 1.0;
    }
    cur
}

/// `J_{k/2}(x)` for odd `k` (also `k = -1`).
pub fn bessel_half(k: i32, x: f64) -> Result<f64> {
    if k < -1 || k % 2 == 0 {
        return Err(Error::Invalid(format!("order index {k} must be odd and ≥ -1")));
    }
    if !(x > 0.0) {
        return Err(Error::Invalid(format!("Bessel argument {x} must be positive")));
    }
    Ok(if x < k as f64 / 2.0 { bessel_half_series(k, x) } else { bessel_half_recursion(k, x) })
}

fn j(k: i32, x: f64) -> f64 {
    bessel_half(k, x).expect("validated order and argument")
}

fn j_prime(k: i32, x: f64) -> f64 {
    j(k - 2, x) - k as f64 / (2.0 * x) * j(k, x)
}

/// n-th positive zero of `J_{k/2}`.
pub fn bessel_zero(k: u32, n: u32) -> Result<f64> {
    if k % 2 == 0 || n == 0 {
        return Err(Error::Invalid(format!("bessel_zero needs odd k and n ≥ 1, got ({k}, {n})")));
    }
    let ki = k as i32;
    // No zero lies below the order; consecutive zeros are more than π/2 apart,
    // so a scan with step π/8 brackets each zero exactly once.
    let step = PI / 8.0;
    let mut a = (k as f64 / 2.0).max(0.25);
    let mut fa = j(ki, a);
    let mut found = 0;
    for _ in 0..(64 * (n as usize + k as usize + 4)) {
        let b = a + step;
        let fb = j(ki, b);
        if fa == 0.0 || fa.signum() != fb.signum() {
            found += 1;
            if found == n {
                return Ok(polish(ki, a, b));
            }
        }
        a = b;
        fa = fb;
    }
    Err(Error::Invalid(format!("bracket failure for zero ({k}, {n})")))
}

fn polish(k: i32, mut a: f64, mut b: f64) -> f64 {
    let mut fa = j(k, a);
    if fa == 0.0 {
        return a;
    }
    while b - a > 1e-15 * b {
        let m = 0.5 * (a + b);
        let fm = j(k, m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let x = 0.5 * (a + b);
    let x1 = x - j(k, x) / j_prime(k, x);
    if j(k, x1).abs() < j(k, x).abs() { x1 } else { x }
}

impl DiskMode {
    pub fn new(k: u32, n: u32) -> Result<Self> {
        let z = bessel_zero(k, n)?;
        let ki = k as i32;
        let radial = integrate_adaptive(
            &|r: f64| if r == 0.0 { 0.0 } else { j(ki, z * r).powi(2) * r },
            0.0,
            1.0,
            1e-15,
        );
        let b = 1.0 / (PI * radial).sqrt();
        let nu = k as f64 / 2.0;
        let beta = b * z.powf(nu) / (2f64.powf(nu) * gamma_half_plus_one(ki));
        Ok(Self { k, n, z, lambda: z * z, b, beta })
    }

    /// Complex eigenfunction sampled at polar coordinates.
    pub fn eigenfunction(&self, variant: DiskVariant, r: f64, t: f64) -> Complex64 {
        let radial = if r <= 0.0 { 0.0 } else { j(self.k as i32, self.z * r) };
        let half = self.k as f64 * t / 2.0;
        let angular = match variant {
            DiskVariant::U => half.sin(),
            DiskVariant::V => -half.cos(),
        };
        Complex64::from_polar(1.0, t / 2.0) * (self.b * radial * angular)
    }

    /// Analytic local expansion at the origin.
    pub fn expansion(&self, variant: DiskVariant) -> LocalExpansion {
        let omega = match variant {
            DiskVariant::U => 0.0,
            DiskVariant::V => PI / self.k as f64,
        };
        LocalExpansion { k: self.k, beta: self.beta, omega, radii: [0.0, 0.0], fit_residual: 0.0 }
    }
}

/// The `count` smallest distinct disk eigenvalues (each of multiplicity two).
pub fn disk_modes(count: usize) -> Result<Vec<DiskMode>> {
    let mut cand: Vec<(f64, u32, u32)> = Vec::new();
    let mut k = 1;
    loop {
        let z1 = bessel_zero(k, 1)?;
        if cand.len() >= count {
            cand.sort_by(|a, b| a.0.total_cmp(&b.0));
            if z1 > cand[count - 1].0 {
                break;
            }
        }
        for n in 1..=count as u32 {
            cand.push((bessel_zero(k, n)?, k, n));
        }
        k += 2;
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    cand.truncate(count);
    cand.into_iter().map(|(_, k, n)| DiskMode::new(k, n)).collect()
}

/// One row of the doubled spectrum table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub lambda: f64,
    pub k: u32,
    pub n: u32,
    pub mult: u32,
}

/// Doubled spectrum: each eigenvalue listed twice, ascending, `count` entries.
pub fn disk_spectrum(count: usize) -> Result<Vec<SpectrumEntry>> {
    let modes = disk_modes(count.div_ceil(2).max(1))?;
    let mut out = Vec::with_capacity(count + 1);
    for m in modes {
        for _ in 0..2 {
            out.push(SpectrumEntry { lambda: m.lambda, k: m.k, n: m.n, mult: 2 });
        }
    }
    out.truncate(count);
    Ok(out)
}

/// Comparison of one double cluster with the closed-form value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterComparison {
    pub k: u32,
    pub n: u32,
    pub exact: f64,
    pub mean: f64,
    pub rel_err: f64,
    /// `(λ_upper − λ_lower)/exact`.
    pub internal_gap: f64,
}

pub const CLUSTER_CSV_HEADER: &str = "k,n,exact,mean,rel_err,internal_gap";

impl ClusterComparison {
    pub fn csv_row(&self) -> String {
        format!("{},{},{:.15e},{:.15e},{:.6e},{:.6e}", self.k, self.n, self.exact, self.mean, self.rel_err, self.internal_gap)
    }
}

/// Pairs consecutive computed eigenvalues (ascending) with the doubled disk spectrum.
pub fn compare_clusters(values: &[f64]) -> Result<Vec<ClusterComparison>> {
    let exact = disk_spectrum(values.len() - values.len() % 2)?;
    Ok(values
        .chunks_exact(2)
        .zip(exact.chunks_exact(2))
        .map(|(v, e)| {
            let mean = 0.5 * (v[0] + v[1]);
            let x = e[0].lambda;
            ClusterComparison { k: e[0].k, n: e[0].n, exact: x, mean, rel_err: (mean - x).abs() / x, internal_gap: (v[1] - v[0]).abs() / x }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_order_closed_forms() {
        assert!(bessel_half(1, PI).unwrap().abs() < 1e-16);
        assert!((bessel_half(1, PI / 2.0).unwrap() - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(bessel_half(1, 0.0).is_err());
        assert!(bessel_half(2, 1.0).is_err());
    }

    #[test]
    fn small_argument_power_law() {
        let r1 = bessel_half(3, 1e-3).unwrap() / 1e-3f64.powf(1.5);
        let r2 = bessel_half(3, 1e-4).unwrap() / 1e-4f64.powf(1.5);
        assert!((r1 / r2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn first_zeros() {
        for n in 1..=5 {
            assert!((bessel_zero(1, n).unwrap() - n as f64 * PI).abs() < 1e-13);
        }
        // Independent oracle: bisection on the elementary numerators of J_{3/2}, J_{5/2}.
        let bisect = |f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64| {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(a).signum() == f(m).signum() { a = m } else { b = m }
            }
            0.5 * (a + b)
        };
        let z3 = bisect(&|x: f64| x.sin() - x * x.cos(), 4.0, 4.7);
        let z5 = bisect(&|x: f64| (3.0 - x * x) * x.sin() - 3.0 * x * x.cos(), 5.0, 6.2);
        assert!((z3 - 4.493_409).abs() < 1e-6 && (z5 - 5.763_459).abs() < 1e-6);
        assert!((bessel_zero(3, 1).unwrap() - z3).abs() < 1e-12);
        assert!((bessel_zero(5, 1).unwrap() - z5).abs() < 1e-12);
    }

    #[test]
    fn spectrum_is_doubled_and_sorted() {
        let s = disk_spectrum(10).unwrap();
        assert_eq!(s.len(), 10);
        for pair in s.chunks(2) {
            assert_eq!(pair[0], pair[1]);
            assert_eq!(pair[0].mult, 2);
        }
        assert!(s.windows(2).all(|w| w[0].lambda <= w[1].lambda));
        assert_eq!((s[0].k, s[0].n), (1, 1));
        assert_eq!((s[2].k, s[2].n), (3, 1));
        assert_eq!((s[4].k, s[4].n), (5, 1));
        assert_eq!((s[6].k, s[6].n), (1, 2));
    }

    #[test]
    fn normalisation_matches_closed_form() {
        // ∫₀¹ J_ν(zr)² r dr = J_{ν+1}(z)²/2 at a zero z of J_ν.
        for (k, n) in [(1, 1), (3, 1), (1, 2), (5, 2)] {
            let m = DiskMode::new(k, n).unwrap();
            let closed = 0.5 * bessel_half(k as i32 + 2, m.z).unwrap().powi(2);
            let b = 1.0 / (PI * closed).sqrt();
            assert!((m.b / b - 1.0).abs() < 1e-10, "{k} {n}");
        }
    }

    #[test]
    fn eigenfunction_nodal_sets() {
        let m = DiskMode::new(3, 1).unwrap();
        for t in [0.1, 1.0, 2.5, 4.0] {
            assert!(m.eigenfunction(DiskVariant::U, 1.0, t).norm() < 1e-13);
        }
        for r in [0.1, 0.5, 0.9] {
            assert!(m.eigenfunction(DiskVariant::U, r, 0.0).norm() < 1e-15);
            assert!(m.eigenfunction(DiskVariant::V, r, PI / 3.0).norm() < 1e-15);
        }
    }
}
