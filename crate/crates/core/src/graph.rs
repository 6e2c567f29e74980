//! The star-shaped metric graph: edges glued at a single junction vertex.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Dense edge index `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Star graph with per-edge lengths in `(0, +inf]`.
///
/// An infinite edge is stored as `f64::INFINITY`; every finite radius compares
/// below it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarGraph {
    lengths: Vec<f64>,
}

impl StarGraph {
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(domain("a star graph needs at least one edge"));
        }
        if let Some((i, l)) = lengths
            .iter()
            .enumerate()
            .find(|(_, l)| l.is_nan() || **l <= 0.0)
        {
            return Err(domain(format!("edge {i} has non-positive length {l}")));
        }
        Ok(Self { lengths })
    }

    /// The unbounded graph with `n` half-lines, home of Walsh Brownian motion.
    pub fn unbounded(n: usize) -> Result<Self> {
        Self::new(vec![f64::INFINITY; n])
    }

    pub fn n_edges(&self) -> usize {
        self.lengths.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.lengths.len()).map(EdgeId)
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self, edge: EdgeId) -> f64 {
        self.lengths[edge.0]
    }

    /// Minimum edge length `l_*`.
    pub fn min_length(&self) -> f64 {
        self.lengths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check_edge(&self, edge: EdgeId) -> Result<()> {
        if edge.0 >= self.lengths.len() {
            return Err(domain(format!(
                "edge {} out of range for a graph with {} edges",
                edge.0,
                self.lengths.len()
            )));
        }
        Ok(())
    }

    /// Builds the point `(edge, radius)`, identifying every radius-zero point
    /// with the vertex.
    pub fn point(&self, edge: EdgeId, radius: f64) -> Result<GraphPoint> {
        self.check_edge(edge)?;
        if radius.is_nan() || radius < 0.0 {
            return Err(domain(format!("negative radius {radius} on edge {edge}")));
        }
        if radius > self.length(edge) {
            return Err(domain(format!(
                "radius {radius} exceeds the length {} of edge {edge}",
                self.length(edge)
            )));
        }
        Ok(GraphPoint::on(edge, radius))
    }

    pub fn canonicalize(&self, p: GraphPoint) -> Result<GraphPoint> {
        match p {
            GraphPoint::Vertex => Ok(GraphPoint::Vertex),
            GraphPoint::Edge { edge, radius } => self.point(edge, radius),
        }
    }

    pub fn contains(&self, p: GraphPoint) -> bool {
        self.canonicalize(p).is_ok()
    }

    /// Graph distance between two valid points.
    pub fn distance(&self, p: GraphPoint, q: GraphPoint) -> Result<f64> {
        let p = self.canonicalize(p)?;
        let q = self.canonicalize(q)?;
        Ok(distance(p, q))
    }
}

/// A point of the graph. Radius-zero points are always represented by
/// [`GraphPoint::Vertex`], so derived equality respects the vertex gluing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GraphPoint {
    Vertex,
    Edge { edge: EdgeId, radius: f64 },
}

impl GraphPoint {
    /// Unchecked constructor; only canonicalises `radius == 0`.
    #[inline]
    pub fn on(edge: EdgeId, radius: f64) -> Self {
        if radius == 0.0 {
            GraphPoint::Vertex
        } else {
            GraphPoint::Edge { edge, radius }
        }
    }

    #[inline]
    pub fn radius(self) -> f64 {
        match self {
            GraphPoint::Vertex => 0.0,
            GraphPoint::Edge { radius, .. } => radius,
        }
    }

    #[inline]
    pub fn edge(self) -> Option<EdgeId> {
        match self {
            GraphPoint::Vertex => None,
            GraphPoint::Edge { edge, .. } => Some(edge),
        }
    }

    #[inline]
    pub fn is_vertex(self) -> bool {
        matches!(self, GraphPoint::Vertex)
    }
}

impl fmt::Display for GraphPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphPoint::Vertex => write!(f, "v"),
            GraphPoint::Edge { edge, radius } => write!(f, "({edge}, {radius})"),
        }
    }
}

/// `|x - y|` on a common edge, `x + y` across edges.
#[inline]
pub fn distance(p: GraphPoint, q: GraphPoint) -> f64 {
    match (p, q) {
        (GraphPoint::Edge { edge: a, radius: x }, GraphPoint::Edge { edge: b, radius: y })
            if a == b =>
        {
            (x - y).abs()
        }
        _ => p.radius() + q.radius(),
    }
}

/// Membership in the open vertex-centred ball `B(v, delta)`.
pub fn in_ball(p: GraphPoint, delta: f64) -> Result<bool> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(domain(format!("ball radius must be positive, got {delta}")));
    }
    Ok(p.radius() < delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g3() -> StarGraph {
        StarGraph::new(vec![1.0, 2.0, f64::INFINITY]).unwrap()
    }

    #[test]
    fn canonicalize_identifies_vertex() {
        let g = g3();
        let a = g.point(EdgeId(2), 0.0).unwrap();
        let b = g.point(EdgeId(1), 0.0).unwrap();
        assert_eq!(a, GraphPoint::Vertex);
        assert_eq!(a, b);
        let c = g.point(EdgeId(1), 0.5).unwrap();
        assert_eq!(c, GraphPoint::Edge { edge: EdgeId(1), radius: 0.5 });
        let raw = GraphPoint::Edge { edge: EdgeId(0), radius: 0.0 };
        assert_eq!(g.canonicalize(raw).unwrap(), GraphPoint::Vertex);
    }

    #[test]
    fn canonicalize_rejects_out_of_range() {
        let g = g3();
        assert!(g.point(EdgeId(0), -0.1).is_err());
        assert!(g.point(EdgeId(0), 1.5).is_err());
        assert!(g.point(EdgeId(7), 0.5).is_err());
        assert!(g.point(EdgeId(2), 1e300).is_ok());
        assert!(g.point(EdgeId(0), 1.0).is_ok());
    }

    #[test]
    fn metric_branches() {
        let g = g3();
        let p = |e, r| g.point(EdgeId(e), r).unwrap();
        assert!((g.distance(p(0, 0.3), p(0, 0.7)).unwrap() - 0.4).abs() < 1e-15);
        assert!((g.distance(p(0, 0.3), p(1, 0.7)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(g.distance(p(0, 0.0), p(1, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn open_ball() {
        assert!(in_ball(GraphPoint::Vertex, 0.1).unwrap());
        assert!(!in_ball(GraphPoint::on(EdgeId(0), 0.1), 0.1).unwrap());
        assert!(in_ball(GraphPoint::on(EdgeId(2), 0.05), 0.1).unwrap());
        assert!(in_ball(GraphPoint::Vertex, 0.0).is_err());
        assert!(in_ball(GraphPoint::Vertex, -1.0).is_err());
    }

    #[test]
    fn graph_validation() {
        assert!(StarGraph::new(vec![]).is_err());
        assert!(StarGraph::new(vec![1.0, 0.0]).is_err());
        assert!(StarGraph::new(vec![f64::NAN]).is_err());
        assert_eq!(g3().min_length(), 1.0);
    }

    fn arb_point() -> impl Strategy<Value = GraphPoint> {
        (0usize..4, prop_oneof![Just(0.0), 0.0f64..5.0])
            .prop_map(|(e, r)| GraphPoint::on(EdgeId(e), r))
    }

    proptest! {
        #[test]
        fn triangle_inequality(p in arb_point(), q in arb_point(), r in arb_point()) {
            let d = distance;
            prop_assert!(d(p, r) <= d(p, q) + d(q, r) + 1e-12);
            prop_assert_eq!(d(p, q), d(q, p));
        }

        #[test]
        fn zero_distance_iff_equal(p in arb_point(), q in arb_point()) {
            let g = StarGraph::unbounded(4).unwrap();
            let (cp, cq) = (g.canonicalize(p).unwrap(), g.canonicalize(q).unwrap());
            prop_assert_eq!(g.canonicalize(cp).unwrap(), cp);
            prop_assert_eq!(distance(p, q) == 0.0, cp == cq);
        }
    }
}
