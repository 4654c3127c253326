//! Eigenvalue branches as the pole moves along a ray, power-law fits, splitting
//! verdicts and the comparison with blow-up predictions.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blowup::{compute_ua_and_ra, sym2_eigenvalues, FiniteFormSample};
use crate::error::{Error, Result};
use crate::fem::{assemble, clusters, solve_eigs_with, DofMap, EigenOptions, EigenPair, Problem};
use crate::geometry::{generate_mesh, insert_crack, CrackedMesh, Domain, MeshParams, SymmetryTag};
use crate::localexp::{canonicalize_pair, BasisCase, CanonicalPair, ExtractOptions};
use crate::numeric::{linear_fit, richardson_table, wrap};

/// Mesh-size policy for pole meshes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HPolicy {
    pub base_h: f64,
    /// `h ≤ √(t·L)/pole_divisor` keeps the segment between origin and pole resolved.
    #[serde(default = "default_divisor")]
    pub pole_divisor: f64,
    #[serde(default = "default_grading")]
    pub grading_exponent: f64,
    /// Mesh the upper half and mirror it when the domain and crack allow.
    #[serde(default)]
    pub symmetric: bool,
}

fn default_divisor() -> f64 {
    8.0
}

fn default_grading() -> f64 {
    2.0
}

impl HPolicy {
    pub fn new(base_h: f64) -> Self {
        Self { base_h, pole_divisor: 8.0, grading_exponent: 2.0, symmetric: false }
    }

    pub fn h(&self, t: f64, length: f64) -> f64 {
        if t > 0.0 {
            self.base_h.min((t * length).sqrt() / self.pole_divisor)
        } else {
            self.base_h
        }
    }
}

/// Solver tolerances shared by branch experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchTolerances {
    /// Relative eigenvalue accuracy of one solve.
    #[serde(default = "default_solve")]
    pub solve: f64,
    /// Relative gap below which two discrete eigenvalues form a double cluster.
    #[serde(default = "default_double")]
    pub double: f64,
}

fn default_solve() -> f64 {
    1e-9
}

fn default_double() -> f64 {
    1e-2
}

impl Default for BranchTolerances {
    fn default() -> Self {
        Self { solve: default_solve(), double: default_double() }
    }
}

/// Mesh with the pole at `t(cos α, sin α)`.
pub fn pole_mesh(domain: &Domain, alpha: f64, t: f64, policy: &HPolicy) -> Result<CrackedMesh> {
    let crack = insert_crack(domain, alpha, t)?;
    let symmetric = policy.symmetric && domain.has_symmetry(SymmetryTag::X1Axis) && (crack.alpha == 0.0 || crack.alpha == PI);
    let params = MeshParams {
        h: policy.h(t, domain.diam),
        grading_exponent: policy.grading_exponent,
        grading_length: None,
        far_growth: 0.0,
        circles: Vec::new(),
        symmetric,
    };
    generate_mesh(domain, Some(&crack), &params)
}

/// Eigenpairs of the slit problem and of the limit problem on one pole mesh.
pub struct PoleSolve {
    pub mesh: CrackedMesh,
    pub cracked: Vec<EigenPair>,
    pub cracked_map: DofMap,
    /// Limit eigenpairs with vectors expanded to all nodes.
    pub limit: Vec<(EigenPair, Vec<f64>)>,
}

pub fn solve_pole(domain: &Domain, alpha: f64, t: f64, count: usize, policy: &HPolicy, with_limit: bool) -> Result<PoleSolve> {
    let mesh = pole_mesh(domain, alpha, t, policy)?;
    let (k, m) = assemble(&mesh)?;
    let opts = EigenOptions::default();
    let problem = Problem::new(&k, &m, DofMap::cracked(&mesh))?;
    let cracked = solve_eigs_with(&problem.k, &problem.m, count, None, &opts)?;
    let limit = if with_limit { Problem::new(&k, &m, DofMap::limit(&mesh))?.eigen(count, None, &opts)? } else { Vec::new() };
    Ok(PoleSolve { mesh, cracked, cracked_map: problem.map, limit })
}

/// Eigenvalues on a sequence of meshes, extrapolated in `h` (exponents 2, 3, …).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumStudy {
    /// `(α, t)` of the pole, or `None` for the crack-free Dirichlet problem.
    pub pole: Option<(f64, f64)>,
    /// Mesh sizes actually used, coarse first.
    pub h: Vec<f64>,
    /// `values[level][j]`.
    pub values: Vec<Vec<f64>>,
    pub extrapolated: Vec<f64>,
    pub err_est: Vec<f64>,
}

pub const SPECTRUM_CSV_HEADER: &str = "j,h,lambda,extrapolated,err_est";

impl SpectrumStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SPECTRUM_CSV_HEADER);
        out.push('\n');
        for (j, (x, e)) in self.extrapolated.iter().zip(&self.err_est).enumerate() {
            for (h, row) in self.h.iter().zip(&self.values) {
                out.push_str(&format!("{},{:.6e},{:.15e},false,0\n", j + 1, h, row[j]));
            }
            out.push_str(&format!("{},0,{:.15e},true,{:.3e}\n", j + 1, x, e));
        }
        out
    }
}

/// Solves the first `count` eigenvalues on each mesh size of `h_levels`
/// (coarse first). With `pole = None` the domain carries no crack.
pub fn spectrum_study(domain: &Domain, pole: Option<(f64, f64)>, h_levels: &[f64], count: usize, grading_exponent: f64) -> Result<SpectrumStudy> {
    if h_levels.is_empty() || h_levels.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("mesh sizes must be non-empty and strictly decreasing".into()));
    }
    let levels: Vec<(f64, Vec<f64>)> = h_levels
        .par_iter()
        .map(|&h| {
            let crack = pole.map(|(a, t)| insert_crack(domain, a, t)).transpose()?;
            let params = MeshParams { grading_exponent, ..MeshParams::new(h) };
            let mesh = generate_mesh(domain, crack.as_ref(), &params)?;
            let (k, m) = assemble(&mesh)?;
            let p = Problem::new(&k, &m, DofMap::cracked(&mesh))?;
            let pairs = solve_eigs_with(&p.k, &p.m, count, None, &EigenOptions::default())?;
            Ok((mesh.h, pairs.into_iter().take(count).map(|e| e.lambda).collect()))
        })
        .collect::<Result<_>>()?;
    let h: Vec<f64> = levels.iter().map(|l| l.0).collect();
    let values: Vec<Vec<f64>> = levels.into_iter().map(|l| l.1).collect();
    let (extrapolated, err_est) = (0..count)
        .map(|j| {
            let col: Vec<f64> = values.iter().map(|row| row[j]).collect();
            let (v, inc) = richardson_table(&col, &h, 2.0);
            (v, if col.len() > 1 { inc } else { f64::NAN })
        })
        .unzip();
    Ok(SpectrumStudy { pole, h, values, extrapolated, err_est })
}

/// Index (1-based) of the first eigenvalue of the `cluster`-th double cluster
/// of the limit problem, with the limit value and its discrete gap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub n: usize,
    pub lambda0: f64,
    pub gap0: f64,
}

/// Groups the limit spectrum at `t = 0` and returns the window of the requested double cluster.
pub fn identify_window(domain: &Domain, alpha: f64, policy: &HPolicy, double_cluster: usize, tol: &BranchTolerances) -> Result<Window> {
    let mut count = 2 * (double_cluster + 1) + 2;
    loop {
        let s = solve_pole(domain, alpha, 0.0, count, policy, false)?;
        let lams: Vec<f64> = s.cracked.iter().map(|e| e.lambda).collect();
        let groups = clusters(&lams, tol.double);
        // The last group may be cut by the requested count.
        let complete = &groups[..groups.len().saturating_sub(1)];
        let doubles: Vec<&std::ops::Range<usize>> = complete.iter().filter(|g| g.len() == 2).collect();
        if let Some(g) = doubles.get(double_cluster) {
            let (a, b) = (lams[g.start], lams[g.start + 1]);
            return Ok(Window { n: g.start + 1, lambda0: 0.5 * (a + b), gap0: b - a });
        }
        if complete.iter().any(|g| g.len() > 2) || count > 60 {
            return Err(Error::Window(format!("no double cluster number {double_cluster} among {lams:?}")));
        }
        count += 4;
    }
}

/// One eigenvalue of the window at one pole position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub alpha: f64,
    pub t: f64,
    pub j: usize,
    pub lambda: f64,
    pub residual: f64,
    pub h: f64,
    /// Mean of the limit pair on the same mesh.
    pub lambda0: f64,
    /// Discrete gap of the limit pair on the same mesh.
    pub gap0: f64,
}

pub const BRANCH_CSV_HEADER: &str = "alpha,t,j,lambda,residual,h,lambda0";

impl BranchSample {
    pub fn csv_row(&self) -> String {
        format!("{:.12e},{:.12e},{},{:.15e},{:.3e},{:.6e},{:.15e}", self.alpha, self.t, self.j, self.lambda, self.residual, self.h, self.lambda0)
    }
}

/// Eigenvalues `λ_n, λ_{n+1}` for each pole distance in `t_list` (strictly decreasing).
pub fn trace_branch(domain: &Domain, alpha: f64, t_list: &[f64], n: usize, policy: &HPolicy) -> Result<Vec<BranchSample>> {
    if t_list.windows(2).any(|w| w[1] >= w[0]) || t_list.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Invalid("pole distances must be positive and strictly decreasing".into()));
    }
    if n == 0 {
        return Err(Error::Invalid("window index is 1-based".into()));
    }
    let per_t: Vec<Vec<BranchSample>> = t_list
        .par_iter()
        .map(|&t| {
            let s = solve_pole(domain, alpha, t, n + 1, policy, true)?;
            let l0 = (s.limit[n - 1].0.lambda, s.limit[n].0.lambda);
            let h = s.mesh.h;
            Ok((n..=n + 1)
                .map(|j| BranchSample {
                    alpha,
                    t,
                    j,
                    lambda: s.cracked[j - 1].lambda,
                    residual: s.cracked[j - 1].residual,
                    h,
                    lambda0: 0.5 * (l0.0 + l0.1),
                    gap0: l0.1 - l0.0,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_t.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub k_fit: f64,
    /// Leading coefficient of `t^k`, `k` the odd integer nearest to `k_fit`,
    /// with the next-order term `t^{k+1}` fitted alongside.
    pub coeff: f64,
    /// `exp` of the log–log intercept, signed.
    pub coeff_loglog: f64,
    pub r2: f64,
    pub t_range: [f64; 2],
    pub n_used: usize,
    pub lambda0: f64,
}

/// Least-squares fit of `λ − λ₀ = coeff·t^{k_fit}` in log–log coordinates;
/// `points` holds `(t, λ, λ₀)`.
pub fn fit_power(points: &[(f64, f64, f64)], solve_tol: f64) -> Result<PowerFit> {
    let used: Vec<(f64, f64, f64)> = points.iter().copied().filter(|(_, l, l0)| (l - l0).abs() > 10.0 * solve_tol * l0.abs()).collect();
    if used.len() < 4 {
        return Err(Error::Fit(format!("{} usable samples, at least 4 needed", used.len())));
    }
    let sign = (used[0].1 - used[0].2).signum();
    if used.iter().any(|(_, l, l0)| (l - l0).signum() != sign) {
        return Err(Error::Fit("λ − λ₀ changes sign across samples".into()));
    }
    let x: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = used.iter().map(|p| (p.1 - p.2).abs().ln()).collect();
    let (slope, intercept, r2) = linear_fit(&x, &y);
    let t_min = used.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_max = used.iter().map(|p| p.0).fold(0.0, f64::max);
    let lambda0 = used.iter().map(|p| p.2).sum::<f64>() / used.len() as f64;
    if !(slope > 0.0) {
        return Err(Error::Fit(format!("non-positive exponent {slope}")));
    }
    let k = nearest_odd(slope);
    let tx: Vec<f64> = used.iter().map(|p| p.0).collect();
    let ratio: Vec<f64> = used.iter().map(|p| (p.1 - p.2) / p.0.powi(k as i32)).collect();
    let (_, leading, _) = linear_fit(&tx, &ratio);
    Ok(PowerFit { k_fit: slope, coeff: leading, coeff_loglog: sign * intercept.exp(), r2, t_range: [t_min, t_max], n_used: used.len(), lambda0 })
}

pub fn nearest_odd(x: f64) -> u32 {
    let k = ((x - 1.0) / 2.0).round().max(0.0) as u32;
    2 * k + 1
}

/// Fits both branches of a trace.
pub fn fit_branches(samples: &[BranchSample], n: usize, solve_tol: f64) -> [Result<PowerFit>; 2] {
    [n, n + 1].map(|j| {
        let pts: Vec<(f64, f64, f64)> = samples.iter().filter(|s| s.j == j).map(|s| (s.t, s.lambda, s.lambda0)).collect();
        fit_power(&pts, solve_tol)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Split,
    NoSplit,
    Inconclusive,
}

/// Split verdict from the window gap at the smallest probe distance.
pub fn split_verdict(gap: f64, gap0: f64, lambda0: f64, solve_tol: f64) -> (Verdict, f64) {
    let noise = solve_tol * lambda0.abs();
    let threshold = (5.0 * noise).max(10.0 * gap0.abs());
    let v = if gap > threshold {
        Verdict::Split
    } else if gap <= 2.0 * gap0.abs() + 5.0 * noise {
        Verdict::NoSplit
    } else {
        Verdict::Inconclusive
    };
    (v, threshold)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub alpha: f64,
    pub verdict: Verdict,
    pub gap: f64,
    pub threshold: f64,
    pub lower: Option<PowerFit>,
    pub upper: Option<PowerFit>,
    pub fit_errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub window: Window,
    pub entries: Vec<AlphaReport>,
    /// Maximal runs of split verdicts `[α_first, α_last]` on the scanned grid.
    pub cones: Vec<[f64; 2]>,
    /// Fraction of grid points whose verdict matches the one at `α + shift`.
    pub periodicity: Option<(f64, f64)>,
    pub samples: Vec<BranchSample>,
}

/// Maximal runs of `Split` on the grid, joining across the wrap when the grid covers a full period.
fn cone_intervals(entries: &[AlphaReport], cyclic: bool) -> Vec<[f64; 2]> {
    let n = entries.len();
    let split: Vec<bool> = entries.iter().map(|e| e.verdict == Verdict::Split).collect();
    if split.iter().all(|s| *s) {
        return vec![[entries[0].alpha, entries[n - 1].alpha]];
    }
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if split[i] {
            let s = i;
            while i + 1 < n && split[i + 1] {
                i += 1;
            }
            runs.push((s, i));
        }
        i += 1;
    }
    if cyclic && runs.len() > 1 && runs[0].0 == 0 && runs[runs.len() - 1].1 == n - 1 {
        let last = runs.pop().expect("non-empty");
        runs[0].0 = last.0;
    }
    runs.into_iter().map(|(a, b)| [entries[a].alpha, entries[b].alpha]).collect()
}

/// Fraction of grid points whose verdict equals the verdict at `α + shift` (when that is on the grid).
pub fn verdict_periodicity(entries: &[AlphaReport], shift: f64, period: f64) -> Option<f64> {
    let mut total = 0;
    let mut same = 0;
    for e in entries {
        let target = wrap(e.alpha + shift, period);
        if let Some(o) = entries.iter().find(|o| {
            let d = wrap(o.alpha - target, period);
            d.min(period - d) < 1e-9
        }) {
            total += 1;
            same += (o.verdict == e.verdict) as usize;
        }
    }
    (total > 0).then(|| same as f64 / total as f64)
}

/// Scans directions; each probe set is traced (descending distances) and the
/// smallest distance decides the verdict. With four or more distances both
/// branches are fitted.
pub fn scan_cones(domain: &Domain, alphas: &[f64], t_probe: &[f64], window: Window, policy: &HPolicy, tol: &BranchTolerances, shift: Option<f64>) -> Result<BifurcationReport> {
    if alphas.is_empty() || t_probe.is_empty() {
        return Err(Error::Invalid("empty direction grid or probe set".into()));
    }
    let traces: Vec<Vec<BranchSample>> = alphas.par_iter().map(|&a| trace_branch(domain, a, t_probe, window.n, policy)).collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(alphas.len());
    for (alpha, tr) in alphas.iter().zip(&traces) {
        let t_min = t_probe[t_probe.len() - 1];
        let at = |j: usize| tr.iter().find(|s| s.t == t_min && s.j == j).expect("traced sample");
        let (lo, hi) = (at(window.n), at(window.n + 1));
        let gap = hi.lambda - lo.lambda;
        let (verdict, threshold) = split_verdict(gap, lo.gap0.max(window.gap0), lo.lambda0, tol.solve);
        let (mut lower, mut upper, mut fit_errors) = (None, None, Vec::new());
        if t_probe.len() >= 4 {
            let [a, b] = fit_branches(tr, window.n, tol.solve);
            match a {
                Ok(f) => lower = Some(f),
                Err(e) => fit_errors.push(format!("lower: {e}")),
            }
            match b {
                Ok(f) => upper = Some(f),
                Err(e) => fit_errors.push(format!("upper: {e}")),
            }
        }
        entries.push(AlphaReport { alpha: *alpha, verdict, gap, threshold, lower, upper, fit_errors });
    }
    let span = alphas[alphas.len() - 1] - alphas[0];
    let step = if alphas.len() > 1 { span / (alphas.len() - 1) as f64 } else { 0.0 };
    let cyclic = alphas.len() > 1 && (span + step - 2.0 * PI).abs() < 1e-6;
    let cones = cone_intervals(&entries, cyclic);
    let periodicity = shift.and_then(|s| verdict_periodicity(&entries, s, 2.0 * PI).map(|f| (s, f)));
    Ok(BifurcationReport { window, entries, cones, periodicity, samples: traces.into_iter().flatten().collect() })
}

/// Sampling radii `(r, 2r)` with `r = 8h`, capped at `diam/16` so that the
/// `r⁴` remainder left by the extrapolation stays small on coarse meshes.
pub fn extraction_radii(h: f64, diam: f64) -> [f64; 2] {
    let r = (8.0 * h).min(diam / 16.0);
    [r, 2.0 * r]
}

/// Canonical limit basis of the window on a limit mesh (`t = 0`).
pub fn limit_basis(domain: &Domain, alpha: f64, window: &Window, policy: &HPolicy, opts: &ExtractOptions) -> Result<(CrackedMesh, CanonicalPair)> {
    let s = solve_pole(domain, alpha, 0.0, window.n + 1, policy, false)?;
    let v1 = s.cracked_map.expand(&s.cracked[window.n - 1].vector);
    let v2 = s.cracked_map.expand(&s.cracked[window.n].vector);
    let h = s.mesh.h;
    let pair = canonicalize_pair(&s.mesh, &v1, &v2, alpha, extraction_radii(h, domain.diam), opts)?;
    Ok((s.mesh, pair))
}

/// Predicted versus fitted leading coefficients of the two branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub alpha: f64,
    pub k: u32,
    pub predicted: [f64; 2],
    pub measured: [f64; 2],
    pub k_fit: [f64; 2],
    /// Relative slope error, or absolute error where the prediction vanishes.
    pub slope_err: [f64; 2],
    pub exponent_err: [f64; 2],
}

/// Predictions: eigenvalues of the limit matrix (same order) or `{C(α, φ₁), 0}` sorted.
pub fn predicted_slopes(case: &BasisCase, r_matrix: Option<[[f64; 2]; 2]>, c_phi1: Option<f64>) -> Result<[f64; 2]> {
    match case {
        BasisCase::SameK { .. } => r_matrix.map(sym2_eigenvalues).ok_or_else(|| Error::BasisCaseMismatch("same-order case needs the limit matrix".into())),
        BasisCase::SplitK { .. } => {
            let c = c_phi1.ok_or_else(|| Error::BasisCaseMismatch("split case needs C(α, φ₁)".into()))?;
            Ok(if c < 0.0 { [c, 0.0] } else { [0.0, c] })
        }
    }
}

pub fn predict_vs_measure(alpha: f64, case: &BasisCase, predicted: [f64; 2], fits: [&PowerFit; 2]) -> Comparison {
    let k = case.k();
    let measured = [fits[0].coeff, fits[1].coeff];
    let slope_err = [0, 1].map(|i| {
        if predicted[i] == 0.0 {
            measured[i].abs()
        } else {
            (measured[i] - predicted[i]).abs() / predicted[i].abs()
        }
    });
    let order = match case {
        BasisCase::SameK { k, .. } => [*k, *k],
        BasisCase::SplitK { k1, .. } => [*k1, *k1],
    };
    let k_fit = [fits[0].k_fit, fits[1].k_fit];
    let exponent_err = [0, 1].map(|i| (k_fit[i] - order[i] as f64).abs());
    Comparison { alpha, k, predicted, measured, k_fit, slope_err, exponent_err }
}

/// `r_a` on the window's limit basis for each pole distance, together with the
/// canonical basis used on each mesh.
pub struct FiniteFormPoint {
    pub sample: FiniteFormSample,
    pub pair: CanonicalPair,
    pub lambda0: f64,
}

pub fn finite_form_series(domain: &Domain, alpha: f64, t_list: &[f64], window: &Window, policy: &HPolicy, opts: &ExtractOptions) -> Result<Vec<FiniteFormPoint>> {
    t_list
        .par_iter()
        .map(|&t| {
            let s = solve_pole(domain, alpha, t, window.n + 1, policy, true)?;
            let (g1, g2) = (&s.limit[window.n - 1], &s.limit[window.n]);
            let lambda0 = 0.5 * (g1.0.lambda + g2.0.lambda);
            let h = s.mesh.h;
            let pair = canonicalize_pair(&s.mesh, &g1.1, &g2.1, alpha, extraction_radii(h, domain.diam), opts)?;
            let sample = compute_ua_and_ra(&s.mesh, lambda0, &pair.vectors)?;
            Ok(FiniteFormPoint { sample, pair, lambda0 })
        })
        .collect()
}
