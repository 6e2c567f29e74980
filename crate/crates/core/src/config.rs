//! JSON run configuration: graph, per-edge scale and speed, bias, stickiness,
//! simulation settings and task.

use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, GraphPoint, StarGraph};
use crate::measure::{hex, CirParams, Density, DiffusionSpec, EdgeMeasure, EdgeScale, SingularCdf};
use crate::timechange::SynthesisSettings;
use crate::walsh::Seed;

pub const SCHEMA_VERSION: u32 = 1;

/// Edge length: a positive number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LengthRepr", into = "LengthRepr")]
pub struct Length(pub f64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LengthRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<LengthRepr> for Length {
    type Error = String;
    fn try_from(r: LengthRepr) -> std::result::Result<Self, String> {
        match r {
            LengthRepr::Number(x) => Ok(Length(x)),
            LengthRepr::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(Length(f64::INFINITY)),
            LengthRepr::Text(s) => Err(format!("length must be a number or \"inf\", got {s:?}")),
        }
    }
}

impl From<Length> for LengthRepr {
    fn from(l: Length) -> Self {
        if l.0.is_infinite() {
            LengthRepr::Text("inf".into())
        } else {
            LengthRepr::Number(l.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub lengths: Vec<Length>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScaleConfig {
    Natural,
    Linear { slope: f64 },
    Tabulated { x: Vec<f64>, y: Vec<f64> },
    Cir { kappa: f64, theta: f64, sigma: f64, shift: f64 },
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig::Natural
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub position: f64,
    pub mass: f64,
}

/// One additive part of a speed measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "part", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpeedPart {
    Lebesgue,
    ScaledLebesgue { factor: f64 },
    /// `coef * |offset + slope * y|^exponent`
    Power { coef: f64, offset: f64, slope: f64, exponent: f64 },
    TabulatedDensity { x: Vec<f64>, v: Vec<f64> },
    CirDensity { kappa: f64, theta: f64, sigma: f64, shift: f64 },
    Atoms { atoms: Vec<AtomConfig> },
    CantorCdf { lo: f64, hi: f64, mass: f64 },
    TabulatedCdf { x: Vec<f64>, cdf: Vec<f64> },
}

impl SpeedPart {
    fn rank(&self) -> u8 {
        match self {
            SpeedPart::Lebesgue
            | SpeedPart::ScaledLebesgue { .. }
            | SpeedPart::Power { .. }
            | SpeedPart::TabulatedDensity { .. }
            | SpeedPart::CirDensity { .. } => 0,
            SpeedPart::Atoms { .. } => 1,
            SpeedPart::CantorCdf { .. } | SpeedPart::TabulatedCdf { .. } => 2,
        }
    }
}

fn default_speed() -> Vec<SpeedPart> {
    vec![SpeedPart::Lebesgue]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    #[serde(default)]
    pub scale: ScaleConfig,
    #[serde(default = "default_speed")]
    pub speed: Vec<SpeedPart>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    pub edge: usize,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Local-time bandwidth; `sqrt(dt)` when absent.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default = "one_usize")]
    pub n_paths: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    /// Start point; the vertex when absent.
    #[serde(default)]
    pub start: Option<StartConfig>,
}

fn one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn one_usize() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { horizon: 1.0, dt: 1e-3, h: None, n_paths: 1, seed: 1, start: None }
    }
}

/// Source term of the Dirichlet task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// `f ≡ 1`: expected exit time.
    One,
    /// `f(e, x) = x`.
    Radius,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletConfig {
    pub delta: f64,
    #[serde(default = "default_source")]
    pub source: Source,
}

fn default_source() -> Source {
    Source::One
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    Sticky,
    Dirichlet,
    Classify,
    Verify,
    Export,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub graph: GraphConfig,
    pub edges: Vec<EdgeConfig>,
    pub bias: Vec<f64>,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub dirichlet: Option<DirichletConfig>,
    #[serde(default)]
    pub task: Option<Task>,
}

impl RunConfig {
    /// Parses JSON, reporting the failing field path with line and column.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            Error::Config { field, line: inner.line(), column: inner.column(), message: inner.to_string() }
        })?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(config_error("schema", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", cfg.schema)));
        }
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Canonical form: bandwidth filled in, speed parts ordered as density,
    /// atoms (merged and sorted), singular part.
    pub fn normalize(&self) -> RunConfig {
        let mut out = self.clone();
        if out.simulation.h.is_none() {
            out.simulation.h = Some(out.simulation.dt.sqrt());
        }
        for edge in &mut out.edges {
            let mut atoms: Vec<AtomConfig> = Vec::new();
            let mut rest = Vec::new();
            for part in edge.speed.drain(..) {
                match part {
                    SpeedPart::Atoms { atoms: a } => atoms.extend(a),
                    other => rest.push(other),
                }
            }
            atoms.sort_by(|p, q| p.position.total_cmp(&q.position));
            if !atoms.is_empty() {
                rest.push(SpeedPart::Atoms { atoms });
            }
            rest.sort_by_key(SpeedPart::rank);
            edge.speed = rest;
        }
        out
    }

    /// SHA-256 of the normalized JSON, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.normalize()).expect("config serialises");
        hex(&Sha256::digest(&bytes))
    }

    /// Builds and validates the diffusion spec.
    pub fn spec(&self) -> Result<DiffusionSpec> {
        let n = self.graph.lengths.len();
        if self.edges.len() != n {
            return Err(config_error("edges", format!("{} edge entries for {n} edges", self.edges.len())));
        }
        let graph = StarGraph::new(self.graph.lengths.iter().map(|l| l.0).collect())?;
        let mut scales = Vec::with_capacity(n);
        let mut speeds = Vec::with_capacity(n);
        for (i, e) in self.edges.iter().enumerate() {
            scales.push(build_scale(&e.scale).map_err(|err| config_error(&format!("edges[{i}].scale"), err.to_string()))?);
            speeds.push(build_speed(&e.speed).map_err(|err| config_error(&format!("edges[{i}].speed"), err.to_string()))?);
        }
        DiffusionSpec::new(graph, scales, speeds, self.bias.clone(), self.rho)
    }

    pub fn start(&self) -> GraphPoint {
        match self.simulation.start {
            Some(s) => GraphPoint::on(EdgeId(s.edge), s.radius),
            None => GraphPoint::Vertex,
        }
    }

    pub fn seed(&self) -> Seed {
        Seed::new(self.simulation.seed)
    }

    pub fn synthesis(&self) -> SynthesisSettings {
        let s = SynthesisSettings::new(self.simulation.dt);
        match self.simulation.h {
            Some(h) => s.with_bandwidth(h),
            None => s,
        }
    }
}

fn config_error(field: &str, message: String) -> Error {
    Error::Config { field: field.into(), line: 0, column: 0, message }
}

fn build_scale(s: &ScaleConfig) -> Result<EdgeScale> {
    match s {
        ScaleConfig::Natural => Ok(EdgeScale::Natural),
        ScaleConfig::Linear { slope } => EdgeScale::linear(*slope),
        ScaleConfig::Tabulated { x, y } => EdgeScale::tabulated(x.clone(), y.clone()),
        ScaleConfig::Cir { kappa, theta, sigma, shift } => {
            EdgeScale::cir(CirParams { kappa: *kappa, theta: *theta, sigma: *sigma, shift: *shift })
        }
    }
}

fn build_speed(parts: &[SpeedPart]) -> Result<EdgeMeasure> {
    let mut m = EdgeMeasure::default();
    let set_density = |m: &mut EdgeMeasure, d: Density| -> Result<()> {
        if m.density.is_some() {
            return Err(Error::InvalidSpec("at most one density part per edge".into()));
        }
        m.density = Some(d);
        Ok(())
    };
    for p in parts {
        match p {
            SpeedPart::Lebesgue => set_density(&mut m, Density::Constant { value: 1.0 })?,
            SpeedPart::ScaledLebesgue { factor } => set_density(&mut m, Density::Constant { value: *factor })?,
            SpeedPart::Power { coef, offset, slope, exponent } => set_density(
                &mut m,
                Density::Power { coef: *coef, offset: *offset, slope: *slope, exponent: *exponent },
            )?,
            SpeedPart::TabulatedDensity { x, v } => set_density(&mut m, Density::Tabulated { x: x.clone(), v: v.clone() })?,
            SpeedPart::CirDensity { kappa, theta, sigma, shift } => set_density(
                &mut m,
                Density::Cir(CirParams { kappa: *kappa, theta: *theta, sigma: *sigma, shift: *shift }),
            )?,
            SpeedPart::Atoms { atoms } => {
                for a in atoms {
                    m = m.with_atom(a.position, a.mass);
                }
            }
            SpeedPart::CantorCdf { lo, hi, mass } => {
                if m.singular.is_some() {
                    return Err(Error::InvalidSpec("at most one singular part per edge".into()));
                }
                m.singular = Some(SingularCdf::Cantor { lo: *lo, hi: *hi, mass: *mass });
            }
            SpeedPart::TabulatedCdf { x, cdf } => {
                if m.singular.is_some() {
                    return Err(Error::InvalidSpec("at most one singular part per edge".into()));
                }
                m.singular = Some(SingularCdf::Tabulated { x: x.clone(), cdf: cdf.clone() });
            }
        }
    }
    m.validate()?;
    Ok(m)
}
