//! Deterministic SVG renderings of run artifacts: fixed viewport, fixed
//! number formatting, no timestamps.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use abpole_core::branch::nearest_odd;
use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::artifacts::{sha256_hex, Manifest, PLOTS_DIR};
use crate::experiments::{ConeRow, FitRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum What {
    Branches,
    Cones,
    G,
    All,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const LEGEND_MAX: usize = 8;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Deserialize)]
struct BranchRow {
    alpha: f64,
    t: f64,
    j: usize,
    lambda: f64,
    lambda0: f64,
}

#[derive(Deserialize)]
struct GRow {
    k: u32,
    zeta: f64,
    value: f64,
    extrapolated: bool,
}

/// A finished run: only files listed in its manifest are read.
pub struct RunDir<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl<'a> RunDir<'a> {
    pub fn open(dir: &'a Path) -> Result<Self> {
        Ok(Self { dir, manifest: Manifest::read(dir).context("plotting needs a finished run")? })
    }

    fn has(&self, name: &str) -> bool {
        self.manifest.files.contains_key(name)
    }

    fn rows<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>> {
        if !self.has(name) {
            bail!("missing artifact {name} in {}", self.dir.display());
        }
        let path = self.dir.join(name);
        let mut rd = csv::Reader::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
        rd.deserialize().collect::<std::result::Result<Vec<T>, _>>().with_context(|| format!("reading {}", path.display()))
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(body, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(body, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(body, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
        Self { body }
    }

    fn line(&mut self, a: [f64; 2], b: [f64; 2], style: &str) {
        let _ = writeln!(self.body, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#, a[0], a[1], b[0], b[1]);
    }

    fn polyline(&mut self, pts: &[[f64; 2]], style: &str) {
        let coords: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", p[0], p[1])).collect();
        let _ = writeln!(self.body, r#"<polyline points="{}" fill="none" {style}/>"#, coords.join(" "));
    }

    fn dot(&mut self, p: [f64; 2], color: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, p[0], p[1]);
    }

    fn text(&mut self, p: [f64; 2], anchor: &str, s: &str) {
        let _ = writeln!(self.body, r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{}</text>"#, p[0], p[1], escape(s));
    }

    fn path(&mut self, d: &str, style: &str) {
        let _ = writeln!(self.body, r#"<path d="{d}" {style}/>"#);
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick positions with steps of 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Cartesian frame mapping data ranges onto the plot area.
struct Frame {
    x: [f64; 2],
    y: [f64; 2],
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                [0.0, 1.0]
            } else if hi - lo <= 1e-300 {
                [lo - 0.5 * lo.abs().max(1.0), hi + 0.5 * hi.abs().max(1.0)]
            } else {
                let pad = 0.05 * (hi - lo);
                [lo - pad, hi + pad]
            }
        };
        Self { x: span(&mut xs.clone()), y: span(&mut ys.clone()) }
    }

    fn map(&self, p: [f64; 2]) -> [f64; 2] {
        let u = (p[0] - self.x[0]) / (self.x[1] - self.x[0]);
        let v = (p[1] - self.y[0]) / (self.y[1] - self.y[0]);
        [LEFT + u * (W - LEFT - RIGHT), H - BOTTOM - v * (H - TOP - BOTTOM)]
    }

    fn axes(&self, svg: &mut Svg, xlabel: &str, ylabel: &str) {
        let axis = r##"stroke="#333" stroke-width="1""##;
        let grid = r##"stroke="#ddd" stroke-width="1""##;
        svg.line([LEFT, H - BOTTOM], [W - RIGHT, H - BOTTOM], axis);
        svg.line([LEFT, TOP], [LEFT, H - BOTTOM], axis);
        for x in ticks(self.x[0], self.x[1]) {
            let p = self.map([x, self.y[0]]);
            svg.line([p[0], TOP], [p[0], H - BOTTOM], grid);
            svg.text([p[0], H - BOTTOM + 18.0], "middle", &tick_label(x));
        }
        for y in ticks(self.y[0], self.y[1]) {
            let p = self.map([self.x[0], y]);
            svg.line([LEFT, p[1]], [W - RIGHT, p[1]], grid);
            svg.text([LEFT - 6.0, p[1] + 4.0], "end", &tick_label(y));
        }
        if self.y[0] < 0.0 && self.y[1] > 0.0 {
            let p = self.map([self.x[0], 0.0]);
            svg.line([LEFT, p[1]], [W - RIGHT, p[1]], r##"stroke="#888" stroke-width="1""##);
        }
        svg.text([(LEFT + W - RIGHT) / 2.0, H - 18.0], "middle", xlabel);
        let _ = writeln!(svg.body, r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#, H / 2.0, H / 2.0, escape(ylabel));
    }
}

/// Directions are printed with different precisions across tables; they are
/// matched to 1e−9.
fn angle_key(alpha: f64) -> i64 {
    (alpha * 1e9).round() as i64
}

/// `(alpha, j) → (k, coeff)` for the power-law overlays.
fn overlays(run: &RunDir) -> Result<BTreeMap<(i64, usize), (u32, f64)>> {
    let mut out = BTreeMap::new();
    if run.has("fits.csv") {
        for f in run.rows::<FitRow>("fits.csv")? {
            if let (Some(k), Some(c)) = (f.k_fit, f.coeff) {
                out.insert((angle_key(f.alpha), f.j), (nearest_odd(k), c));
            }
        }
    } else if run.has("cones.csv") {
        // Cone scans store fits per direction; the window index comes from the samples.
        let samples: Vec<BranchRow> = run.rows("branch.csv")?;
        for c in run.rows::<ConeRow>("cones.csv")? {
            let n = samples.iter().filter(|s| angle_key(s.alpha) == angle_key(c.alpha)).map(|s| s.j).min();
            if let (Some(n), Some(k), Some(v)) = (n, c.k_fit_lower, c.coeff_lower) {
                out.insert((angle_key(c.alpha), n), (nearest_odd(k), v));
            }
            if let (Some(n), Some(k), Some(v)) = (n, c.k_fit_upper, c.coeff_upper) {
                out.insert((angle_key(c.alpha), n + 1), (nearest_odd(k), v));
            }
        }
    }
    Ok(out)
}

pub fn branches_svg(run: &RunDir) -> Result<String> {
    let rows: Vec<BranchRow> = run.rows("branch.csv")?;
    if rows.is_empty() {
        bail!("branch.csv has no samples");
    }
    let fits = overlays(run)?;
    let mut curves: BTreeMap<(i64, usize), Vec<[f64; 2]>> = BTreeMap::new();
    let mut order: Vec<(i64, usize)> = Vec::new();
    for r in &rows {
        let key = (angle_key(r.alpha), r.j);
        if !curves.contains_key(&key) {
            order.push(key);
        }
        curves.entry(key).or_default().push([r.t, r.lambda - r.lambda0]);
    }
    for c in curves.values_mut() {
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
    }
    let t_max = rows.iter().map(|r| r.t).fold(0.0, f64::max);
    let frame = Frame::new(rows.iter().map(|r| r.t).chain([0.0]), rows.iter().map(|r| r.lambda - r.lambda0).chain([0.0]));
    let mut svg = Svg::new("Branches λ − λ₀ against pole distance t");
    frame.axes(&mut svg, "t", "λ − λ₀");
    for (i, key) in order.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<[f64; 2]> = curves[key].iter().map(|p| frame.map(*p)).collect();
        svg.polyline(&pts, &format!(r#"stroke="{color}" stroke-width="1.5""#));
        for p in &pts {
            svg.dot(*p, color);
        }
        if let Some((k, c)) = fits.get(key) {
            let model: Vec<[f64; 2]> = (0..=60).map(|s| t_max * s as f64 / 60.0).map(|t| frame.map([t, c * t.powi(*k as i32)])).collect();
            svg.polyline(&model, &format!(r#"stroke="{color}" stroke-width="1" stroke-dasharray="5,4""#));
        }
        if i >= LEGEND_MAX {
            continue;
        }
        let alpha = key.0 as f64 * 1e-9;
        let fit = fits.get(key).map(|(k, c)| format!(", fit {c:.3}·t^{k}")).unwrap_or_default();
        let y = TOP + 16.0 + 16.0 * i as f64;
        svg.line([LEFT + 12.0, y - 4.0], [LEFT + 32.0, y - 4.0], &format!(r#"stroke="{color}" stroke-width="2""#));
        svg.text([LEFT + 38.0, y], "start", &format!("α = {alpha:.4}, λ_{}{fit}", key.1));
    }
    if order.len() > LEGEND_MAX {
        svg.text([LEFT + 38.0, TOP + 16.0 + 16.0 * LEGEND_MAX as f64], "start", &format!("and {} more curves", order.len() - LEGEND_MAX));
    }
    Ok(svg.finish())
}

pub fn cones_svg(run: &RunDir) -> Result<String> {
    let rows: Vec<ConeRow> = run.rows("cones.csv")?;
    if rows.is_empty() {
        bail!("cones.csv has no directions");
    }
    let mut svg = Svg::new("Splitting directions of the pole");
    let (cx, cy, rad) = (W / 2.0 - 60.0, H / 2.0 + 10.0, 170.0);
    let at = |a: f64, r: f64| [cx + r * a.cos(), cy - r * a.sin()];
    let mut alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    alphas.sort_by(|a, b| a.total_cmp(b));
    let half = if alphas.len() > 1 {
        let min_step = alphas.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        0.5 * min_step.min(2.0 * PI / alphas.len() as f64)
    } else {
        PI / 8.0
    };
    for r in &rows {
        let fill = match r.verdict {
            abpole_core::branch::Verdict::Split => "#d62728",
            abpole_core::branch::Verdict::NoSplit => "#cccccc",
            abpole_core::branch::Verdict::Inconclusive => "#ffbf00",
        };
        let (a0, a1) = (r.alpha - half, r.alpha + half);
        let (p0, p1) = (at(a0, rad), at(a1, rad));
        let d = format!("M {cx:.2} {cy:.2} L {:.2} {:.2} A {rad:.2} {rad:.2} 0 0 0 {:.2} {:.2} Z", p0[0], p0[1], p1[0], p1[1]);
        svg.path(&d, &format!(r#"fill="{fill}" fill-opacity="0.6" stroke="white" stroke-width="0.5""#));
    }
    svg.path(
        &format!("M {:.2} {cy:.2} A {rad:.2} {rad:.2} 0 1 0 {:.2} {cy:.2} A {rad:.2} {rad:.2} 0 1 0 {:.2} {cy:.2}", cx + rad, cx - rad, cx + rad),
        r##"fill="none" stroke="#333" stroke-width="1""##,
    );
    for q in 0..4 {
        let a = q as f64 * PI / 2.0;
        svg.line([cx, cy], at(a, rad), r##"stroke="#999" stroke-width="0.5""##);
        let p = at(a, rad + 16.0);
        svg.text([p[0], p[1] + 4.0], "middle", ["0", "π/2", "π", "3π/2"][q]);
    }
    svg.dot([cx, cy], "#333");
    let legend = [("#d62728", "split"), ("#cccccc", "no split"), ("#ffbf00", "inconclusive")];
    for (i, (c, name)) in legend.iter().enumerate() {
        let y = TOP + 40.0 + 22.0 * i as f64;
        let _ = writeln!(svg.body, r#"<rect x="{:.2}" y="{:.2}" width="14" height="14" fill="{c}" fill-opacity="0.6"/>"#, W - 150.0, y - 11.0);
        svg.text([W - 130.0, y], "start", name);
    }
    Ok(svg.finish())
}

/// First sign change of the sampled curve, by linear interpolation.
fn sign_change(pts: &[[f64; 2]]) -> Option<f64> {
    pts.windows(2).find(|w| w[0][1] < 0.0 && w[1][1] >= 0.0).map(|w| w[0][0] - w[0][1] * (w[1][0] - w[0][0]) / (w[1][1] - w[0][1]))
}

pub fn g_svg(run: &RunDir) -> Result<String> {
    let rows: Vec<GRow> = run.rows("gtable.csv")?;
    let mut by_k: BTreeMap<u32, Vec<[f64; 2]>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.extrapolated) {
        by_k.entry(r.k).or_default().push([r.zeta, r.value]);
    }
    if by_k.is_empty() {
        bail!("gtable.csv has no extrapolated rows");
    }
    for v in by_k.values_mut() {
        v.sort_by(|a, b| a[0].total_cmp(&b[0]));
    }
    let all = by_k.values().flatten();
    let frame = Frame::new(all.clone().map(|p| p[0]), all.map(|p| p[1]).chain([0.0]));
    let mut svg = Svg::new("G_k(ζ)");
    frame.axes(&mut svg, "ζ", "G_k(ζ)");
    for (i, (k, pts)) in by_k.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mapped: Vec<[f64; 2]> = pts.iter().map(|p| frame.map(*p)).collect();
        svg.polyline(&mapped, &format!(r#"stroke="{color}" stroke-width="1.5""#));
        for p in &mapped {
            svg.dot(*p, color);
        }
        let mut label = format!("k = {k}");
        if let Some(z0) = sign_change(pts) {
            let top = frame.map([z0, frame.y[1]]);
            let bottom = frame.map([z0, frame.y[0]]);
            svg.line(top, bottom, &format!(r#"stroke="{color}" stroke-width="1" stroke-dasharray="4,3""#));
            label.push_str(&format!(", ζ₀ ≈ {z0:.4}"));
        }
        let y = TOP + 16.0 + 16.0 * i as f64;
        svg.line([LEFT + 12.0, y - 4.0], [LEFT + 32.0, y - 4.0], &format!(r#"stroke="{color}" stroke-width="2""#));
        svg.text([LEFT + 38.0, y], "start", &label);
    }
    Ok(svg.finish())
}

type Render = fn(&RunDir) -> Result<String>;

/// Renders the requested plots into `dir/plots` and records them in the manifest.
pub fn plot(dir: &Path, what: What) -> Result<Vec<String>> {
    let mut run = RunDir::open(dir)?;
    let all: [(&str, &str, Render); 3] = [("branches", "branch.csv", branches_svg), ("cones", "cones.csv", cones_svg), ("g", "gtable.csv", g_svg)];
    let jobs: Vec<(&str, Render)> = match what {
        What::Branches => vec![("branches", branches_svg)],
        What::Cones => vec![("cones", cones_svg)],
        What::G => vec![("g", g_svg)],
        What::All => all.iter().filter(|j| run.has(j.1)).map(|j| (j.0, j.2)).collect(),
    };
    if jobs.is_empty() {
        bail!("{} has nothing to plot", dir.display());
    }
    std::fs::create_dir_all(dir.join(PLOTS_DIR))?;
    let mut written = Vec::new();
    for (name, render) in jobs {
        let svg = render(&run).with_context(|| format!("{name} plot"))?;
        let rel = format!("{PLOTS_DIR}/{name}.svg");
        std::fs::write(dir.join(&rel), &svg)?;
        run.manifest.files.insert(rel.clone(), sha256_hex(svg.as_bytes()));
        written.push(rel);
    }
    run.manifest.write(dir)?;
    Ok(written)
}
