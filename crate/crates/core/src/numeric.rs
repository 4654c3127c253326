//! Small numerical helpers shared by several modules.

/// 8-point Gauss–Legendre nodes and weights on [-1, 1].
pub const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Integrates `f` over `[a, b]` with 8-point Gauss–Legendre.
pub fn gauss8<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (b - a);
    GAUSS8.iter().map(|&(x, w)| w * f(c + d * x)).sum::<f64>() * d
}

/// Adaptive bisection on top of [`gauss8`], stopping when halves agree to `tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = gauss8(f, a, m);
        let right = gauss8(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= tol {
            left + right
        } else {
            rec(f, a, m, left, 0.5 * tol, depth - 1) + rec(f, m, b, right, 0.5 * tol, depth - 1)
        }
    }
    rec(f, a, b, gauss8(f, a, b), tol, 40)
}

/// Richardson step assuming `v(q) = v∞ + c·q^p` where the two samples are at
/// parameters `q_coarse > q_fine`.
pub fn richardson(coarse: f64, fine: f64, q_coarse: f64, q_fine: f64, p: f64) -> f64 {
    let rc = q_coarse.powf(p);
    let rf = q_fine.powf(p);
    (rc * fine - rf * coarse) / (rc - rf)
}

/// Repeated Richardson elimination of `v(q) = v∞ + c₁q^{p₀} + c₂q^{p₀+1} + …`
/// over consecutive samples; returns the value and the size of the last increment.
pub fn richardson_table(values: &[f64], q: &[f64], p0: f64) -> (f64, f64) {
    let mut col: Vec<f64> = values.to_vec();
    let mut last_inc = 0.0;
    let mut p = p0;
    while col.len() > 1 {
        let next: Vec<f64> = (0..col.len() - 1).map(|i| richardson(col[i], col[i + 1], q[i], q[i + 1], p)).collect();
        last_inc = (next[next.len() - 1] - col[col.len() - 1]).abs();
        col = next;
        p += 1.0;
    }
    (col[0], last_inc)
}

/// Ordinary least squares fit `y = slope·x + intercept`; returns `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Reduces an angle to `[0, period)`.
pub fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period { 0.0 } else { r }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
