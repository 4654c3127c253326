//! Experiment configuration: one JSON document, strict keys, every default
//! materialised in the echoed copy.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use abpole_core::blowup::BlowupConfig;
use abpole_core::branch::{BranchTolerances, HPolicy};
use abpole_core::numeric::wrap;
use abpole_core::DomainSpec;
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Spectrum,
    Branch,
    Cones,
    Gtable,
    ValidateDisk,
    Predict,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Spectrum => "spectrum",
            Kind::Branch => "branch",
            Kind::Cones => "cones",
            Kind::Gtable => "gtable",
            Kind::ValidateDisk => "validate-disk",
            Kind::Predict => "predict",
        }
    }
}

/// A list of parameter values, given explicitly or generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Grid {
    Values(Vec<f64>),
    /// `count` equispaced points from `from` to `to`, the last one included when `endpoint`.
    Uniform { from: f64, to: f64, count: usize, endpoint: bool },
    /// `count` points in geometric progression between `from` and `to`, both included.
    Geometric { from: f64, to: f64, count: usize },
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match self {
            Grid::Values(v) => v.clone(),
            Grid::Uniform { from, to, count, endpoint } => {
                let div = if *endpoint { count.saturating_sub(1).max(1) } else { (*count).max(1) };
                (0..*count).map(|i| from + (to - from) * i as f64 / div as f64).collect()
            }
            Grid::Geometric { from, to, count } => {
                if !(*from > 0.0 && *to > 0.0) {
                    bail!("geometric grid needs positive ends, got {from} and {to}");
                }
                let div = count.saturating_sub(1).max(1) as f64;
                (0..*count).map(|i| from * (to / from).powf(i as f64 / div)).collect()
            }
        };
        if pts.is_empty() || pts.iter().any(|x| !x.is_finite()) {
            bail!("grid {self:?} is empty or not finite");
        }
        Ok(pts)
    }
}

/// Pole position `t(cos α, sin α)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pole {
    pub alpha: f64,
    pub t: f64,
}

/// Acceptance thresholds applied by the runner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub solve: f64,
    /// Relative gap below which two eigenvalues count as one double cluster.
    pub double: f64,
    /// Relative error of a cluster mean against the disk oracle.
    pub cluster_rel: f64,
    /// Relative internal gap of a disk cluster.
    pub cluster_gap: f64,
    /// Multiple of the reported error granted to each G property.
    pub g_slack: f64,
    /// Relative error of a measured branch coefficient against its prediction.
    pub slope_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let b = BranchTolerances::default();
        Self { solve: b.solve, double: b.double, cluster_rel: 5e-3, cluster_gap: 1e-2, g_slack: 3.0, slope_rel: 0.15 }
    }
}

impl Tolerances {
    pub fn branch(&self) -> BranchTolerances {
        BranchTolerances { solve: self.solve, double: self.double }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub domain: DomainSpec,
    pub output: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Pole directions.
    pub alphas: Grid,
    /// Pole distances; traced in decreasing order.
    pub t: Grid,
    /// Which double cluster of the limit spectrum (0 = first).
    pub window: usize,
    /// Mesh policy for pole meshes.
    pub h: HPolicy,
    /// Mesh sizes of a spectrum study, coarse first.
    pub h_levels: Vec<f64>,
    /// Number of eigenvalues of a spectrum study.
    pub count: usize,
    /// Pole of a spectrum study; `null` for the crack-free problem.
    pub pole: Option<Pole>,
    /// Truncated blow-up discretisation.
    pub blowup: BlowupConfig,
    /// Vanishing orders of the G table.
    pub k: Vec<u32>,
    pub zeta: Grid,
    /// Shift for the cone periodicity check.
    pub shift: Option<f64>,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            domain: DomainSpec::disk(1.0),
            output: PathBuf::from("out"),
            threads: 0,
            alphas: Grid::Values(vec![0.0]),
            t: Grid::Geometric { from: 0.2, to: 0.05, count: 5 },
            window: 0,
            h: HPolicy::new(0.04),
            h_levels: vec![0.04, 0.02],
            count: 6,
            pole: Some(Pole { alpha: 0.0, t: 0.0 }),
            blowup: BlowupConfig::default(),
            k: vec![1, 3],
            zeta: Grid::Uniform { from: 0.0, to: PI, count: 17, endpoint: true },
            shift: None,
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (or starts from defaults), applies `key=value` overrides and
    /// fixes the experiment kind.
    pub fn load(path: Option<&Path>, sets: &[String], kind: Kind) -> Result<Self> {
        let base: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Self::default(),
        };
        let mut value = serde_json::to_value(&base)?;
        for s in sets {
            let (key, raw) = s.split_once('=').ok_or_else(|| anyhow!("override `{s}` is not of the form key=value"))?;
            set_path(&mut value, key, parse_scalar(raw))?;
        }
        let mut cfg: Self = serde_json::from_value(value).context("applying overrides")?;
        match cfg.kind {
            Some(k) if k != kind => bail!("config is for `{}` but `{}` was requested", k.name(), kind.name()),
            _ => cfg.kind = Some(kind),
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    /// Pole directions folded into (−π, π], ascending, without repeats.
    pub fn alpha_points(&self) -> Result<Vec<f64>> {
        let mut a: Vec<f64> = self.alphas.points()?.into_iter().map(fold_angle).collect();
        a.sort_by(|x, y| x.total_cmp(y));
        a.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        Ok(a)
    }

    /// Pole distances, strictly decreasing.
    pub fn t_points(&self) -> Result<Vec<f64>> {
        let mut t = self.t.points()?;
        t.sort_by(|a, b| b.total_cmp(a));
        t.dedup();
        if t.iter().any(|x| !(*x > 0.0)) {
            bail!("pole distances must be positive, got {t:?}");
        }
        Ok(t)
    }
}

fn fold_angle(a: f64) -> f64 {
    let w = wrap(a + PI, 2.0 * PI) - PI;
    if w <= -PI + 1e-12 {
        PI
    } else {
        w
    }
}

/// JSON if it parses, a plain string otherwise.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets a dotted path, creating intermediate objects; numeric segments index arrays.
fn set_path(root: &mut Value, key: &str, v: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(p.to_string(), v);
                    return Ok(());
                }
                map.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = p.parse().with_context(|| format!("`{p}` in `{key}` is not an array index"))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| anyhow!("index {idx} out of range ({len}) in `{key}`"))?;
                if last {
                    *slot = v;
                    return Ok(());
                }
                slot
            }
            Value::Null => {
                *cur = Value::Object(Default::default());
                let Value::Object(map) = cur else { unreachable!() };
                if last {
                    map.insert(p.to_string(), v);
                    return Ok(());
                }
                map.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            _ => bail!("cannot descend into `{p}` of `{key}`: not an object"),
        };
    }
    Ok(())
}
