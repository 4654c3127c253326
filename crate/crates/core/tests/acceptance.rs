//! End-to-end acceptance run. Prints one `PASS`/`FAIL` line per criterion with
//! the measured quantities, then exits non-zero if any criterion failed.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use abpole_core::blowup::{g_property_suite, BlowupConfig, BlowupSolver, CoeffC, RMatrix};
use abpole_core::branch::{
    fit_branches, finite_form_series, identify_window, limit_basis, predict_vs_measure, predicted_slopes, scan_cones, spectrum_study, trace_branch,
    BranchTolerances, HPolicy, Verdict, BRANCH_CSV_HEADER,
};
use abpole_core::disk_oracle::compare_clusters;
use abpole_core::geometry::{build_domain, Domain, DomainSpec};
use abpole_core::localexp::{extract_expansion, f_alpha, ExtractOptions, PolarField};
use abpole_core::numeric::{linear_fit, wrap};
use abpole_core::{DiskMode, DiskVariant};
use num_complex::Complex64;

// Tolerances and budgets.
const CLUSTER_REL: f64 = 5e-3;
const CLUSTER_GAP: f64 = 1e-2;
const SQUARE_REL: f64 = 5e-3;
const G_SLACK: f64 = 3.0;
const DIAG_REL: f64 = 1e-6;
const K_FIT_RANGE: [f64; 2] = [0.9, 1.1];
const COEFF_BALANCE: f64 = 0.2;
const ROTATION_REL: f64 = 0.1;
const SLOPE_REL: f64 = 0.15;
const FINITE_FORM_REL: f64 = 0.15;
const ENERGY_SLOPE: [f64; 2] = [0.4, 0.6];
const OMEGA_ABS: f64 = 1e-3;
const BETA_REL: f64 = 1e-2;

/// Mesh size away from the pole for the branch experiments.
const BRANCH_H: f64 = 0.04;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn disk() -> Domain {
    build_domain(&DomainSpec::disk(1.0)).unwrap()
}

fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| b * (a / b).powf(i as f64 / (n - 1) as f64)).collect()
}

fn spectrum_disk() -> Outcome {
    let s = spectrum_study(&disk(), Some((0.0, 0.0)), &[0.04, 0.02], 6, 2.0).unwrap();
    let rows = compare_clusters(&s.extrapolated).unwrap();
    let pass = rows.len() == 3 && rows.iter().all(|r| r.rel_err <= CLUSTER_REL && r.internal_gap <= CLUSTER_GAP);
    let detail = rows.iter().map(|r| format!("k={} err {:.1e} gap {:.1e}", r.k, r.rel_err, r.internal_gap)).collect::<Vec<_>>().join("; ");
    outcome(pass, detail)
}

fn dirichlet_square() -> Outcome {
    let sq = build_domain(&DomainSpec::rectangle(0.5, 0.5)).unwrap();
    let s = spectrum_study(&sq, None, &[0.04, 0.02], 1, 2.0).unwrap();
    let exact = 2.0 * PI * PI;
    let rel = (s.extrapolated[0] - exact).abs() / exact;
    outcome(rel <= SQUARE_REL, format!("λ₁ = {:.6} vs {:.6}, rel {:.1e}", s.extrapolated[0], exact, rel))
}

fn g_properties(solver: &BlowupSolver) -> Outcome {
    let mut pass = true;
    let mut failed = Vec::new();
    for k in [1, 3] {
        let f = solver.fields(k).unwrap();
        for c in g_property_suite(&f, G_SLACK).unwrap() {
            if !c.pass {
                pass = false;
                failed.push(format!("k={k} {}: {}", c.name, c.detail));
            }
        }
    }
    outcome(pass, if failed.is_empty() { "all checks hold for k = 1, 3".into() } else { failed.join("; ") })
}

fn diagonal_consistency(solver: &BlowupSolver) -> Outcome {
    let d = disk();
    let policy = HPolicy::new(BRANCH_H);
    let w = identify_window(&d, 0.0, &policy, 0, &BranchTolerances::default()).unwrap();
    let f = solver.fields(1).unwrap();
    let level = &f.levels[f.levels.len() - 1][f.radii.len() - 1];
    let mut worst: f64 = 0.0;
    for alpha in [0.0, 1.0, 2.5] {
        let (_, pair) = limit_basis(&d, alpha, &w, &policy, &ExtractOptions::default()).unwrap();
        let m = RMatrix::on_level(alpha, &pair.case, level).unwrap();
        let [e1, e2] = pair.case.expansions();
        for (i, e) in [e1, e2].iter().enumerate() {
            let c = CoeffC::on_level(alpha, e, level);
            worst = worst.max((m[i][i] - c).abs() / c.abs());
        }
    }
    outcome(worst <= DIAG_REL, format!("max relative deviation {worst:.1e}"))
}

fn disk_bifurcation(solver: &BlowupSolver) -> (Outcome, Outcome) {
    let d = disk();
    let policy = HPolicy::new(BRANCH_H);
    let tol = BranchTolerances::default();
    let w = identify_window(&d, 0.0, &policy, 0, &tol).unwrap();
    let ts = geometric(0.05, 0.2, 5);
    let fits_at = |alpha: f64| {
        let tr = trace_branch(&d, alpha, &ts, w.n, &policy).unwrap();
        let [lo, hi] = fit_branches(&tr, w.n, tol.solve);
        (lo.unwrap(), hi.unwrap())
    };
    let (lo, hi) = fits_at(0.0);
    let (lo3, hi3) = fits_at(PI / 3.0);
    let in_range = |k: f64| k >= K_FIT_RANGE[0] && k <= K_FIT_RANGE[1];
    let balance = (lo.coeff + hi.coeff).abs() / hi.coeff;
    let rot = ((lo3.coeff - lo.coeff) / lo.coeff).abs().max(((hi3.coeff - hi.coeff) / hi.coeff).abs());
    let pass5 = in_range(lo.k_fit) && in_range(hi.k_fit) && lo.coeff < 0.0 && hi.coeff > 0.0 && balance <= COEFF_BALANCE && rot <= ROTATION_REL;
    let o5 = outcome(
        pass5,
        format!("k_fit {:.3}/{:.3}, coeff {:.3}/{:.3}, balance {:.3}, rotation change {:.1e}", lo.k_fit, hi.k_fit, lo.coeff, hi.coeff, balance, rot),
    );

    let (_, pair) = limit_basis(&d, 0.0, &w, &policy, &ExtractOptions::default()).unwrap();
    let f = solver.fields(1).unwrap();
    let r = RMatrix::compute(0.0, &pair.case, &f).unwrap();
    let mu = predicted_slopes(&pair.case, Some(r.entries), None).unwrap();
    let cmp = predict_vs_measure(0.0, &pair.case, mu, [&lo, &hi]);
    let pass6 = cmp.slope_err.iter().all(|e| *e <= SLOPE_REL);
    let o6 = outcome(
        pass6,
        format!("μ = {:.3}/{:.3}, measured {:.3}/{:.3}, errors {:.1e}/{:.1e}", mu[0], mu[1], lo.coeff, hi.coeff, cmp.slope_err[0], cmp.slope_err[1]),
    );
    (o5, o6)
}

fn rectangle_symmetry() -> Outcome {
    let rect = build_domain(&DomainSpec::rectangle(1.0, 0.6)).unwrap();
    let policy = HPolicy::new(BRANCH_H);
    let tol = BranchTolerances::default();
    let w = identify_window(&rect, 0.0, &policy, 0, &tol).unwrap();
    let ts = geometric(0.05, 0.2, 5);
    let rep = scan_cones(&rect, &[0.0, PI], &ts, w, &policy, &tol, None).unwrap();
    let e = &rep.entries[0];
    let (lo, hi) = (e.lower.as_ref().unwrap(), e.upper.as_ref().unwrap());
    let odd = |k: f64| (k.round() as i64) % 2 == 1;
    let opposite = lo.coeff * hi.coeff < 0.0 && (lo.coeff + hi.coeff).abs() <= COEFF_BALANCE * hi.coeff.abs();
    // Meshes for α and α + π are generated independently, so the comparison
    // tolerance is twice the larger of the solve accuracy and the discrete
    // splitting of the limit cluster on the same mesh.
    let n = rep.samples.len() / 2;
    let mut worst: f64 = 0.0;
    let mut antipodal = true;
    for (a, b) in rep.samples[..n].iter().zip(&rep.samples[n..]) {
        let allowed = 2.0 * (tol.solve * a.lambda0).max(a.gap0.max(b.gap0));
        let dev = (a.lambda - b.lambda).abs();
        antipodal &= a.t == b.t && a.j == b.j && dev <= allowed;
        worst = worst.max(dev / allowed);
    }
    let pass = e.verdict == Verdict::Split && opposite && odd(lo.k_fit) && odd(hi.k_fit) && antipodal;
    outcome(
        pass,
        format!(
            "λ₀ = {:.4} (n = {}), {:?}, coeff {:.3}/{:.3}, k_fit {:.2}/{:.2}, antipodal deviation {:.2} of allowance",
            w.lambda0, w.n, e.verdict, lo.coeff, hi.coeff, lo.k_fit, hi.k_fit, worst
        ),
    )
}

fn finite_form(solver: &BlowupSolver) -> Outcome {
    let d = disk();
    let policy = HPolicy::new(BRANCH_H);
    let w = identify_window(&d, 0.0, &policy, 0, &BranchTolerances::default()).unwrap();
    let ts = [0.1, 0.05, 0.025];
    let pts = finite_form_series(&d, 0.0, &ts, &w, &policy, &ExtractOptions::default()).unwrap();
    let f = solver.fields(1).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for i in 0..2 {
        let k = pts[0].pair.case.k();
        let dev: Vec<f64> = pts
            .iter()
            .map(|p| {
                let e = p.pair.case.expansions()[i];
                let c = CoeffC::compute(0.0, &e, &f).unwrap().value;
                (p.sample.entries[i][i] / p.sample.t.powi(k as i32) - c).abs() / c.abs()
            })
            .collect();
        let x: Vec<f64> = pts.iter().map(|p| p.sample.t.ln()).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.sample.energies[i].ln()).collect();
        let (slope, _, _) = linear_fit(&x, &y);
        let kf = k as f64;
        let ok = dev[2] <= FINITE_FORM_REL && dev[2] < dev[0] && slope >= ENERGY_SLOPE[0] * kf && slope <= ENERGY_SLOPE[1] * kf;
        pass &= ok;
        detail.push(format!("basis {}: deviations {:.3}/{:.3}/{:.3}, energy slope {:.3}", i + 1, dev[0], dev[1], dev[2], slope));
    }
    outcome(pass, detail.join("; "))
}

fn expansion_extraction() -> Outcome {
    let opts = ExtractOptions::default();
    let mut worst_omega: f64 = 0.0;
    let mut worst_beta: f64 = 0.0;
    let mut k_ok = true;
    for (k, n) in [(1, 1), (3, 1), (5, 1), (1, 2), (3, 2)] {
        let mode = DiskMode::new(k, n).unwrap();
        for variant in [DiskVariant::U, DiskVariant::V] {
            let exact = mode.expansion(variant);
            for alpha in [0.0, 1.0, PI, 4.5] {
                let field = PolarField(|r: f64, t: f64| f_alpha(alpha, t) * (Complex64::from_polar(1.0, -t / 2.0) * mode.eigenfunction(variant, r, t)).re);
                let e = extract_expansion(&field, alpha, [0.01, 0.02], &opts).unwrap();
                k_ok &= e.k == exact.k;
                let period = 4.0 * PI / k as f64;
                let dw = wrap(e.omega - exact.omega, period);
                worst_omega = worst_omega.max(dw.min(period - dw));
                worst_beta = worst_beta.max((e.beta - exact.beta).abs() / exact.beta);
            }
        }
    }
    let pass = k_ok && worst_omega <= OMEGA_ABS && worst_beta <= BETA_REL;
    outcome(pass, format!("orders exact: {k_ok}, max |Δω| {worst_omega:.1e}, max β error {worst_beta:.1e}"))
}

fn determinism() -> Outcome {
    let d = disk();
    let policy = HPolicy::new(0.08);
    let run = || {
        let tr = trace_branch(&d, 0.3, &[0.2, 0.1], 1, &policy).unwrap();
        let mut csv = String::from(BRANCH_CSV_HEADER);
        for s in &tr {
            csv.push('\n');
            csv.push_str(&s.csv_row());
        }
        let spec = spectrum_study(&d, Some((0.0, 0.0)), &[0.08, 0.06], 4, 2.0).unwrap().to_csv();
        let solver = BlowupSolver::new(BlowupConfig { radii: vec![4.0, 8.0], h_levels: vec![0.25, 0.125], grading_exponent: 2.0 }).unwrap();
        let g = solver.fields(1).unwrap().table(&[0.0, 0.5, PI / 2.0]).unwrap().to_csv();
        (csv, spec, g)
    };
    let a = run();
    let b = run();
    outcome(a == b, format!("branch, spectrum and G tables identical: {}", a == b))
}

fn line(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed();
    let pass = o.pass && took <= budget;
    println!("[{}] {id:>2} {name}: {} ({:.1} s of {} s)", if pass { "PASS" } else { "FAIL" }, o.detail, took.as_secs_f64(), budget.as_secs());
    pass
}

fn main() {
    // Listing and filtering flags from the test runner are accepted; the run is a single unit.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let solver = BlowupSolver::new(BlowupConfig::default()).unwrap();
    let secs = Duration::from_secs;
    let mut results = Vec::new();
    results.push(line(1, "disk spectrum", secs(120), spectrum_disk));
    results.push(line(2, "Dirichlet square", secs(30), dirichlet_square));
    results.push(line(3, "G properties", secs(300), || g_properties(&solver)));
    results.push(line(4, "diagonal consistency", secs(120), || diagonal_consistency(&solver)));
    let mut slope = None;
    results.push(line(5, "disk bifurcation", secs(300), || {
        let (o5, o6) = disk_bifurcation(&solver);
        slope = Some(o6);
        o5
    }));
    results.push(line(6, "slope prediction", secs(300), || slope.take().expect("computed with the bifurcation check")));
    results.push(line(7, "rectangle symmetry", secs(300), rectangle_symmetry));
    results.push(line(8, "finite-form convergence", secs(300), || finite_form(&solver)));
    results.push(line(9, "expansion extraction", secs(10), expansion_extraction));
    results.push(line(10, "determinism", secs(300), determinism));
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
