//! One runner per experiment kind. Each reads the effective configuration,
//! reuses cached solves, writes its tables and reports a status.

use abpole_core::blowup::{g_property_suite, BlowupConfig, BlowupSolver, CoeffC, PropertyCheck, RMatrix};
use abpole_core::branch::{
    fit_branches, identify_window, limit_basis, predict_vs_measure, predicted_slopes, scan_cones, spectrum_study, trace_branch, BifurcationReport,
    Comparison, SpectrumStudy, Verdict, Window, BRANCH_CSV_HEADER,
};
use abpole_core::disk_oracle::{compare_clusters, ClusterComparison, CLUSTER_CSV_HEADER};
use abpole_core::geometry::build_domain;
use abpole_core::localexp::ExtractOptions;
use abpole_core::{BasisCase, BranchSample, Domain, DomainKind, PowerFit};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::artifacts::{Cache, Writer};
use crate::config::{ExperimentConfig, Kind};

/// Overall outcome; ordered so that the worst one wins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Inconclusive => 2,
            Status::Fail => 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub kind: Kind,
    pub status: Status,
    pub lines: Vec<String>,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    domain: Domain,
    cache: Cache,
    status: Status,
    lines: Vec<String>,
}

impl Run<'_> {
    fn note(&mut self, status: Status, line: String) {
        self.status = self.status.max(status);
        self.lines.push(line);
    }

    fn window(&self, alpha: f64) -> Result<Window> {
        let cfg = self.cfg;
        let tol = cfg.tolerances.branch();
        self.cache
            .get_or("window", &(&cfg.domain, alpha, cfg.window, &cfg.h, &tol), || Ok(identify_window(&self.domain, alpha, &cfg.h, cfg.window, &tol)?))
            .with_context(|| format!("identifying double cluster {} at α = {alpha}", cfg.window))
    }

    fn trace(&self, alpha: f64, ts: &[f64], n: usize) -> Result<Vec<BranchSample>> {
        let cfg = self.cfg;
        self.cache
            .get_or("trace", &(&cfg.domain, alpha, ts, n, &cfg.h), || Ok(trace_branch(&self.domain, alpha, ts, n, &cfg.h)?))
            .with_context(|| format!("tracing eigenvalues {n}, {} at α = {alpha}, t = {ts:?}", n + 1))
    }
}

pub fn run(cfg: &ExperimentConfig, w: &mut Writer) -> Result<Summary> {
    let kind = cfg.kind.expect("kind fixed on load");
    let domain = build_domain(&cfg.domain).context("building the domain")?;
    let mut r = Run { cfg, domain, cache: Cache::new(w.dir()), status: Status::Pass, lines: Vec::new() };
    match kind {
        Kind::Spectrum => spectrum(&mut r, w)?,
        Kind::ValidateDisk => validate_disk(&mut r, w)?,
        Kind::Branch => branch(&mut r, w)?,
        Kind::Cones => cones(&mut r, w)?,
        Kind::Gtable => gtable(&mut r, w)?,
        Kind::Predict => predict(&mut r, w)?,
    }
    let summary = Summary { kind, status: r.status, lines: r.lines };
    w.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn study(r: &Run, pole: Option<(f64, f64)>) -> Result<SpectrumStudy> {
    let cfg = r.cfg;
    r.cache
        .get_or("spectrum", &(&cfg.domain, pole, &cfg.h_levels, cfg.count, cfg.h.grading_exponent), || {
            Ok(spectrum_study(&r.domain, pole, &cfg.h_levels, cfg.count, cfg.h.grading_exponent)?)
        })
        .with_context(|| format!("spectrum study with pole {pole:?} on h = {:?}", cfg.h_levels))
}

fn spectrum(r: &mut Run, w: &mut Writer) -> Result<()> {
    let pole = r.cfg.pole.map(|p| (p.alpha, p.t));
    let s = study(r, pole)?;
    w.write("spectrum.csv", &s.to_csv())?;
    w.write_json("spectrum.json", &s)?;
    let shown: Vec<String> = s.extrapolated.iter().map(|x| format!("{x:.6}")).collect();
    r.note(Status::Pass, format!("extrapolated eigenvalues: {}", shown.join(", ")));
    Ok(())
}

fn validate_disk(r: &mut Run, w: &mut Writer) -> Result<()> {
    let DomainKind::Disk { radius } = r.cfg.domain.shape else {
        bail!("validate-disk needs a disk domain");
    };
    let alpha = r.cfg.pole.map(|p| p.alpha).unwrap_or(0.0);
    if r.cfg.pole.is_some_and(|p| p.t != 0.0) {
        bail!("validate-disk needs the pole at the centre");
    }
    let s = study(r, Some((alpha, 0.0)))?;
    // Eigenvalues scale with radius⁻².
    let scaled: Vec<f64> = s.extrapolated.iter().map(|x| x * radius * radius).collect();
    let rows: Vec<ClusterComparison> = compare_clusters(&scaled)?;
    let mut csv = format!("{CLUSTER_CSV_HEADER},pass\n");
    let tol = &r.cfg.tolerances;
    for c in &rows {
        let pass = c.rel_err <= tol.cluster_rel && c.internal_gap <= tol.cluster_gap;
        csv.push_str(&format!("{},{pass}\n", c.csv_row()));
        let status = if pass { Status::Pass } else { Status::Fail };
        r.note(status, format!("cluster (k={}, n={}): mean {:.6} vs {:.6}, rel err {:.2e}, gap {:.2e}", c.k, c.n, c.mean, c.exact, c.rel_err, c.internal_gap));
    }
    w.write("spectrum.csv", &s.to_csv())?;
    w.write("clusters.csv", &csv)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitRow {
    pub alpha: f64,
    pub branch: String,
    pub j: usize,
    pub k_fit: Option<f64>,
    pub coeff: Option<f64>,
    pub coeff_loglog: Option<f64>,
    pub r2: Option<f64>,
    pub n_used: Option<usize>,
    pub lambda0: Option<f64>,
    pub error: String,
}

fn fit_row(alpha: f64, branch: &str, j: usize, f: Result<&PowerFit, String>) -> FitRow {
    match f {
        Ok(f) => FitRow {
            alpha,
            branch: branch.into(),
            j,
            k_fit: Some(f.k_fit),
            coeff: Some(f.coeff),
            coeff_loglog: Some(f.coeff_loglog),
            r2: Some(f.r2),
            n_used: Some(f.n_used),
            lambda0: Some(f.lambda0),
            error: String::new(),
        },
        Err(e) => FitRow { alpha, branch: branch.into(), j, k_fit: None, coeff: None, coeff_loglog: None, r2: None, n_used: None, lambda0: None, error: e },
    }
}

fn samples_csv(samples: &[BranchSample]) -> String {
    let mut out = String::from(BRANCH_CSV_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wr.serialize(row)?;
    }
    Ok(String::from_utf8(wr.into_inner()?)?)
}

fn branch(r: &mut Run, w: &mut Writer) -> Result<()> {
    let ts = r.cfg.t_points()?;
    let mut samples = Vec::new();
    let mut fits = Vec::new();
    for alpha in r.cfg.alpha_points()? {
        let win = r.window(alpha)?;
        let tr = r.trace(alpha, &ts, win.n)?;
        let [lo, hi] = fit_branches(&tr, win.n, r.cfg.tolerances.solve);
        for (name, j, f) in [("lower", win.n, lo), ("upper", win.n + 1, hi)] {
            let f = f.map_err(|e| e.to_string());
            match &f {
                Ok(p) => r.note(Status::Pass, format!("α = {alpha:.4} {name} branch (λ_{j}): λ − λ₀ ≈ {:.4}·t^{:.3}", p.coeff, p.k_fit)),
                Err(e) => r.note(Status::Inconclusive, format!("α = {alpha:.4} {name} branch (λ_{j}): no fit ({e})")),
            }
            fits.push(fit_row(alpha, name, j, f.as_ref().map_err(|e| e.clone())));
        }
        samples.extend(tr);
    }
    w.write("branch.csv", &samples_csv(&samples))?;
    w.write("fits.csv", &to_csv(&fits)?)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeRow {
    pub alpha: f64,
    pub verdict: Verdict,
    pub gap: f64,
    pub threshold: f64,
    pub k_fit_lower: Option<f64>,
    pub coeff_lower: Option<f64>,
    pub k_fit_upper: Option<f64>,
    pub coeff_upper: Option<f64>,
}

fn cones(r: &mut Run, w: &mut Writer) -> Result<()> {
    let cfg = r.cfg;
    let alphas = cfg.alpha_points()?;
    let ts = cfg.t_points()?;
    let win = r.window(alphas[0])?;
    let tol = cfg.tolerances.branch();
    let rep: BifurcationReport = r
        .cache
        .get_or("cones", &(&cfg.domain, &alphas, &ts, &win, &cfg.h, &tol, cfg.shift), || Ok(scan_cones(&r.domain, &alphas, &ts, win, &cfg.h, &tol, cfg.shift)?))
        .with_context(|| format!("scanning directions {alphas:?} with t = {ts:?}"))?;
    let mut rows = Vec::new();
    for e in &rep.entries {
        let status = if e.verdict == Verdict::Inconclusive { Status::Inconclusive } else { Status::Pass };
        let fits = match (&e.lower, &e.upper) {
            (Some(lo), Some(hi)) => format!(", coefficients {:.4}/{:.4}, k_fit {:.3}/{:.3}", lo.coeff, hi.coeff, lo.k_fit, hi.k_fit),
            _ => String::new(),
        };
        r.note(status, format!("α = {:.4}: {:?} (gap {:.3e}, threshold {:.3e}){fits}", e.alpha, e.verdict, e.gap, e.threshold));
        rows.push(ConeRow {
            alpha: e.alpha,
            verdict: e.verdict,
            gap: e.gap,
            threshold: e.threshold,
            k_fit_lower: e.lower.as_ref().map(|f| f.k_fit),
            coeff_lower: e.lower.as_ref().map(|f| f.coeff),
            k_fit_upper: e.upper.as_ref().map(|f| f.k_fit),
            coeff_upper: e.upper.as_ref().map(|f| f.coeff),
        });
    }
    for c in &rep.cones {
        r.lines.push(format!("split directions [{:.4}, {:.4}]", c[0], c[1]));
    }
    if let Some((s, f)) = rep.periodicity {
        r.lines.push(format!("verdict agreement under α ↦ α + {s:.4}: {:.0}%", 100.0 * f));
    }
    w.write("cones.csv", &to_csv(&rows)?)?;
    w.write_json("cones.json", &rep)?;
    w.write("branch.csv", &samples_csv(&rep.samples))?;
    Ok(())
}

/// Builds the blow-up solver on first use only, so cache hits skip it.
struct LazySolver<'a> {
    config: &'a BlowupConfig,
    solver: Option<BlowupSolver>,
}

impl LazySolver<'_> {
    fn get(&mut self) -> Result<&BlowupSolver> {
        if self.solver.is_none() {
            log::info!("building blow-up discretisation {:?}", self.config);
            self.solver = Some(BlowupSolver::new(self.config.clone()).context("building the blow-up problem")?);
        }
        Ok(self.solver.as_ref().expect("just built"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropertyRow {
    pub k: u32,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn gtable(r: &mut Run, w: &mut Writer) -> Result<()> {
    let cfg = r.cfg;
    let zetas = cfg.zeta.points()?;
    let mut lazy = LazySolver { config: &cfg.blowup, solver: None };
    let mut csv = String::new();
    let mut props = Vec::new();
    for &k in &cfg.k {
        // Extrapolated rows carry R = ∞, which JSON numbers cannot hold, so the table is cached as text.
        let (table, checks): (String, Vec<PropertyCheck>) = r
            .cache
            .get_or("gtable", &(&cfg.blowup, k, &zetas, cfg.tolerances.g_slack), || {
                let f = lazy.get()?.fields(k)?;
                Ok((f.table(&zetas)?.to_csv(), g_property_suite(&f, cfg.tolerances.g_slack)?))
            })
            .with_context(|| format!("G table for k = {k} at ζ = {zetas:?}"))?;
        let body = if csv.is_empty() { table.as_str() } else { table.split_once('\n').map(|x| x.1).unwrap_or("") };
        csv.push_str(body);
        for c in checks {
            let status = if c.pass { Status::Pass } else { Status::Fail };
            r.note(status, format!("k = {k}: {} {} ({})", c.name, if c.pass { "holds" } else { "FAILS" }, c.detail));
            props.push(PropertyRow { k, name: c.name, pass: c.pass, detail: c.detail });
        }
    }
    w.write("gtable.csv", &csv)?;
    w.write("properties.csv", &to_csv(&props)?)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prediction {
    pub window: Window,
    pub case: BasisCase,
    pub r_matrix: Option<RMatrix>,
    pub c_phi1: Option<CoeffC>,
    pub comparison: Option<Comparison>,
    pub fit_errors: Vec<String>,
    pub samples: Vec<BranchSample>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictRow {
    pub alpha: f64,
    pub k: u32,
    pub predicted_lower: f64,
    pub predicted_upper: f64,
    pub measured_lower: Option<f64>,
    pub measured_upper: Option<f64>,
    pub k_fit_lower: Option<f64>,
    pub k_fit_upper: Option<f64>,
    pub slope_err_lower: Option<f64>,
    pub slope_err_upper: Option<f64>,
}

fn prediction(r: &Run, lazy: &mut LazySolver, alpha: f64, ts: &[f64]) -> Result<Prediction> {
    let cfg = r.cfg;
    let window = r.window(alpha)?;
    let key = (&cfg.domain, alpha, ts, &window, &cfg.h, &cfg.blowup, cfg.tolerances.solve);
    r.cache.get_or("predict", &key, || {
        let (_, pair) = limit_basis(&r.domain, alpha, &window, &cfg.h, &ExtractOptions::default()).context("limit basis")?;
        let case = pair.case;
        let (r_matrix, c_phi1, predicted) = match &case {
            BasisCase::SameK { k, .. } => {
                let m = RMatrix::compute(alpha, &case, &*lazy.get()?.fields(*k)?)?;
                let p = predicted_slopes(&case, Some(m.entries), None)?;
                (Some(m), None, p)
            }
            BasisCase::SplitK { k1, phi1, .. } => {
                let c = CoeffC::compute(alpha, phi1, &*lazy.get()?.fields(*k1)?)?;
                let p = predicted_slopes(&case, None, Some(c.value))?;
                (None, Some(c), p)
            }
        };
        let samples = r.trace(alpha, ts, window.n)?;
        let [lo, hi] = fit_branches(&samples, window.n, cfg.tolerances.solve);
        let (comparison, fit_errors) = match (lo, hi) {
            (Ok(lo), Ok(hi)) => (Some(predict_vs_measure(alpha, &case, predicted, [&lo, &hi])), Vec::new()),
            (lo, hi) => (None, [lo.err(), hi.err()].into_iter().flatten().map(|e| e.to_string()).collect()),
        };
        Ok(Prediction { window, case, r_matrix, c_phi1, comparison, fit_errors, samples })
    })
}

fn predict(r: &mut Run, w: &mut Writer) -> Result<()> {
    let cfg = r.cfg;
    let ts = cfg.t_points()?;
    let mut lazy = LazySolver { config: &cfg.blowup, solver: None };
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut samples = Vec::new();
    for alpha in cfg.alpha_points()? {
        let p = prediction(r, &mut lazy, alpha, &ts).with_context(|| format!("prediction at α = {alpha}"))?;
        let predicted = match (&p.r_matrix, &p.c_phi1) {
            (Some(m), _) => m.eigenvalues(),
            (None, Some(c)) => predicted_slopes(&p.case, None, Some(c.value))?,
            (None, None) => bail!("prediction at α = {alpha} carries neither a limit matrix nor C(α, φ₁)"),
        };
        let c = p.comparison.as_ref();
        let row = PredictRow {
            alpha,
            k: p.case.k(),
            predicted_lower: predicted[0],
            predicted_upper: predicted[1],
            measured_lower: c.map(|c| c.measured[0]),
            measured_upper: c.map(|c| c.measured[1]),
            k_fit_lower: c.map(|c| c.k_fit[0]),
            k_fit_upper: c.map(|c| c.k_fit[1]),
            slope_err_lower: c.map(|c| c.slope_err[0]),
            slope_err_upper: c.map(|c| c.slope_err[1]),
        };
        match c {
            Some(c) => {
                let pass = c.slope_err.iter().all(|e| *e <= cfg.tolerances.slope_rel);
                r.note(
                    if pass { Status::Pass } else { Status::Fail },
                    format!(
                        "α = {alpha:.4}: predicted {:.4}/{:.4}, measured {:.4}/{:.4}, errors {:.2e}/{:.2e}",
                        predicted[0], predicted[1], c.measured[0], c.measured[1], c.slope_err[0], c.slope_err[1]
                    ),
                );
            }
            None => {
                r.note(Status::Inconclusive, format!("α = {alpha:.4}: predicted {:.4}/{:.4}, no fit ({})", predicted[0], predicted[1], p.fit_errors.join("; ")));
            }
        }
        rows.push(row);
        samples.extend(p.samples.iter().cloned());
        reports.push(p);
    }
    w.write("predict.csv", &to_csv(&rows)?)?;
    w.write_json("predict.json", &reports)?;
    w.write("branch.csv", &samples_csv(&samples))?;
    Ok(())
}
