//! The full diffusion specification: graph, per-edge scale and speed, bias, stickiness.

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::boundary::{boundary_integrals, default_base_point, BoundaryClass, BoundaryIntegrals, ClassifierSettings};
use super::scale::EdgeScale;
use super::speed::{EdgeMeasure, Interval};
use crate::error::{domain, Error, Result};
use crate::graph::{EdgeId, GraphPoint, StarGraph};

/// Data `(s_e, m_e; e in E)`, bias `beta` and stickiness `rho`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionSpec {
    graph: StarGraph,
    scales: Vec<EdgeScale>,
    speeds: Vec<EdgeMeasure>,
    bias: Vec<f64>,
    rho: f64,
}

fn check_bias(bias: &[f64], n: usize) -> Result<()> {
    if bias.len() != n {
        return Err(Error::InvalidSpec(format!("{} bias weights for {n} edges", bias.len())));
    }
    if bias.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::InvalidSpec("bias weights must be positive".into()));
    }
    let total: f64 = bias.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec(format!("bias weights sum to {total}, not 1")));
    }
    Ok(())
}

impl DiffusionSpec {
    /// Validates and assembles a spec. Every speed measure must have full support.
    pub fn new(
        graph: StarGraph,
        scales: Vec<EdgeScale>,
        speeds: Vec<EdgeMeasure>,
        bias: Vec<f64>,
        rho: f64,
    ) -> Result<Self> {
        let n = graph.n_edges();
        if scales.len() != n || speeds.len() != n {
            return Err(Error::InvalidSpec(format!(
                "{n} edges but {} scales and {} speed measures",
                scales.len(),
                speeds.len()
            )));
        }
        check_bias(&bias, n)?;
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidSpec(format!("stickiness must be finite and >= 0, got {rho}")));
        }
        for (i, m) in speeds.iter().enumerate() {
            m.validate()?;
            let l = graph.length(EdgeId(i));
            if !m.has_full_support(l) {
                return Err(Error::InvalidSpec(format!(
                    "speed measure on edge {i} lacks full support; add a positive density"
                )));
            }
        }
        Ok(DiffusionSpec { graph, scales, speeds, bias, rho })
    }

    /// Walsh Brownian motion on unbounded edges, optionally sticky.
    pub fn walsh(bias: &[f64], rho: f64) -> Result<Self> {
        let n = bias.len();
        if n == 0 {
            return Err(Error::InvalidSpec("no edges".into()));
        }
        DiffusionSpec::new(
            StarGraph::unbounded(n)?,
            vec![EdgeScale::Natural; n],
            vec![EdgeMeasure::lebesgue(); n],
            bias.to_vec(),
            rho,
        )
    }

    pub fn graph(&self) -> &StarGraph {
        &self.graph
    }
    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }
    pub fn scale(&self, e: EdgeId) -> &EdgeScale {
        &self.scales[e.index()]
    }
    pub fn speed(&self, e: EdgeId) -> &EdgeMeasure {
        &self.speeds[e.index()]
    }
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Natural scale on every edge.
    pub fn is_nse(&self) -> bool {
        self.scales.iter().all(EdgeScale::is_natural)
    }

    /// Brownian on every unbounded edge: natural scale and Lebesgue speed.
    pub fn is_walsh(&self) -> bool {
        self.is_nse()
            && self.graph.lengths().iter().all(|l| l.is_infinite())
            && self.speeds.iter().all(|m| {
                m.transport.is_none()
                    && m.atoms.is_empty()
                    && m.singular.is_none()
                    && matches!(m.density, Some(super::Density::Constant { value }) if value == 1.0)
            })
    }

    /// `(e, x) -> (e, s_e(x))`.
    pub fn scale_eval(&self, p: GraphPoint) -> GraphPoint {
        match p {
            GraphPoint::Vertex => GraphPoint::Vertex,
            GraphPoint::Edge { edge, radius } => {
                GraphPoint::on(edge, self.scales[edge.index()].eval(radius))
            }
        }
    }

    /// `(e, y) -> (e, q_e(y))`.
    pub fn inverse_scale_eval(&self, p: GraphPoint) -> Result<GraphPoint> {
        match p {
            GraphPoint::Vertex => Ok(GraphPoint::Vertex),
            GraphPoint::Edge { edge, radius } => {
                if edge.index() >= self.n_edges() {
                    return Err(domain(format!("unknown edge {edge}")));
                }
                let s = &self.scales[edge.index()];
                let top = s.eval(self.graph.length(edge));
                if !(radius >= 0.0) || radius > top {
                    return Err(domain(format!("radius {radius} outside scale range [0, {top}]")));
                }
                Ok(GraphPoint::on(edge, s.inverse(radius)))
            }
        }
    }

    /// `∫_I g dm_e`.
    pub fn measure_integral<G: Fn(f64) -> f64>(&self, e: EdgeId, g: G, iv: Interval) -> Result<f64> {
        if e.index() >= self.n_edges() {
            return Err(domain(format!("unknown edge {e}")));
        }
        let l = self.graph.length(e);
        if iv.lo < 0.0 || iv.hi > l || !(iv.lo <= iv.hi) {
            return Err(domain(format!("interval ({}, {}) outside edge of length {l}", iv.lo, iv.hi)));
        }
        self.speeds[e.index()].integral(g, iv)
    }

    /// Spec of `Y = s(X)`: natural scale, transported speed, and the
    /// normalisation `sum_e beta_e s'_e(0)` applied to bias and stickiness.
    pub fn pushforward(&self) -> Result<DiffusionSpec> {
        if self.is_nse() && self.scales.iter().all(|s| matches!(s, EdgeScale::Natural)) {
            return Ok(self.clone());
        }
        let mut weights = Vec::with_capacity(self.n_edges());
        for (i, s) in self.scales.iter().enumerate() {
            let d = s.deriv(0.0);
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::DegenerateScale { edge: i, value: d });
            }
            weights.push(d);
        }
        let norm: f64 = self.bias.iter().zip(&weights).map(|(b, d)| b * d).sum();
        let mut bias: Vec<f64> = self.bias.iter().zip(&weights).map(|(b, d)| b * d / norm).collect();
        let total: f64 = bias.iter().sum();
        bias.iter_mut().for_each(|b| *b /= total);
        let lengths: Vec<f64> = self
            .graph
            .edges()
            .map(|e| self.scales[e.index()].eval(self.graph.length(e)))
            .collect();
        let speeds = self
            .speeds
            .iter()
            .zip(&self.scales)
            .map(|(m, s)| m.pushed_through(s))
            .collect();
        Ok(DiffusionSpec {
            graph: StarGraph::new(lengths)?,
            scales: vec![EdgeScale::Natural; self.n_edges()],
            speeds,
            bias,
            rho: self.rho / norm,
        })
    }

    /// `I1`, `I2` probes on edge `e` from base point `x0` (defaulted when `None`).
    pub fn boundary_integrals(&self, e: EdgeId, x0: Option<f64>) -> Result<BoundaryIntegrals> {
        if e.index() >= self.n_edges() {
            return Err(domain(format!("unknown edge {e}")));
        }
        let l = self.graph.length(e);
        let x0 = x0.unwrap_or_else(|| default_base_point(l));
        let m = &self.speeds[e.index()];
        if let Some(scale) = &m.transport {
            // The integrals are invariant under change of scale: probe the original.
            let original = EdgeMeasure { transport: None, ..m.clone() };
            let settings = ClassifierSettings::default();
            return boundary_integrals(e, scale, &original, scale.inverse(l), scale.inverse(x0), &settings);
        }
        boundary_integrals(e, &self.scales[e.index()], m, l, x0, &ClassifierSettings::default())
    }

    /// Classifies the far end of edge `e`.
    pub fn classify_boundary(&self, e: EdgeId, x0: Option<f64>) -> Result<BoundaryClass> {
        Ok(self.boundary_integrals(e, x0)?.class())
    }

    /// True iff every open boundary is natural.
    pub fn is_feller_dynkin(&self) -> Result<bool> {
        let mut all = true;
        for e in self.graph.edges() {
            all &= self.classify_boundary(e, None)? == BoundaryClass::Natural;
        }
        Ok(all)
    }

    /// Errors unless every open boundary is natural.
    pub fn require_natural_boundaries(&self) -> Result<()> {
        for e in self.graph.edges() {
            let class = self.classify_boundary(e, None)?;
            if class != BoundaryClass::Natural {
                return Err(Error::NonNaturalBoundary { edge: e.index(), class });
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serialises");
        hex(&Sha256::digest(&bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
