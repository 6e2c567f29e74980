//! Ball Dirichlet problems `L u = -f` with zero boundary data, expected exit
//! times and Green-kernel exit moments.
//!
//! On each edge `u_e(x) = b_e(x) + c_e (s_e(x) - s_e(δ))` with
//! `b_e(x) = 2 ∫_x^δ ∫_(0,y) f dm_e s_e(dy)`. The constants `c_e` are fixed by
//! continuity at the vertex together with the gluing condition
//! `sum_e β_e u'_e(0+) = -ρ f(v)`.

use std::io::Write;

use crate::error::{domain, Result};
use crate::graph::{EdgeId, GraphPoint};
use crate::measure::{DiffusionSpec, Interval};

/// Cells of the uniform part of the tabulation grid.
const GRID_CELLS: usize = 512;
const CELL_TOL: f64 = 1e-12;

/// Tabulated solution on one edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSolution {
    pub nodes: Vec<f64>,
    pub u: Vec<f64>,
    /// Right derivative in `x`.
    pub du_right: Vec<f64>,
    /// Left derivative in `x`.
    pub du_left: Vec<f64>,
    /// The auxiliary function `b_e` on the nodes.
    pub b: Vec<f64>,
    /// Coefficient of `s_e(x) - s_e(δ)`.
    pub slope: f64,
}

impl EdgeSolution {
    fn eval(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        let k = self.nodes.partition_point(|&t| t <= x);
        if k == 0 {
            return self.u[0];
        }
        if k == n {
            return self.u[n - 1];
        }
        let i = k - 1;
        if x == self.nodes[i] {
            return self.u[i];
        }
        // Cubic Hermite with one-sided derivatives.
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.u[i] + h10 * h * self.du_right[i] + h01 * self.u[i + 1] + h11 * h * self.du_left[i + 1]
    }
}

/// Solution of the ball Dirichlet problem.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletSolution {
    pub delta: f64,
    pub vertex_value: f64,
    pub edges: Vec<EdgeSolution>,
    bias: Vec<f64>,
    rho: f64,
    f_vertex: f64,
}

impl DirichletSolution {
    /// `u(p)` for `p` in the closed ball.
    pub fn eval(&self, p: GraphPoint) -> Result<f64> {
        match p {
            GraphPoint::Vertex => Ok(self.vertex_value),
            GraphPoint::Edge { edge, radius } => {
                if edge.index() >= self.edges.len() || !(radius >= 0.0 && radius <= self.delta) {
                    return Err(domain(format!("point {p} outside the ball of radius {}", self.delta)));
                }
                Ok(self.edges[edge.index()].eval(radius))
            }
        }
    }

    /// `u'_e(0+)`.
    pub fn vertex_derivative(&self, e: EdgeId) -> f64 {
        self.edges[e.index()].du_right[0]
    }

    /// `sum_e β_e u'_e(0+) + ρ f(v)`, zero for an exact solution.
    pub fn gluing_residual(&self) -> f64 {
        let flux: f64 = self
            .bias
            .iter()
            .zip(&self.edges)
            .map(|(b, e)| b * e.du_right[0])
            .sum();
        flux + self.rho * self.f_vertex
    }

    /// Per-edge tables with columns `edge,x,u`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "edge,x,u")?;
        for (e, sol) in self.edges.iter().enumerate() {
            for (x, u) in sol.nodes.iter().zip(&sol.u) {
                writeln!(w, "{e},{x},{u}")?;
            }
        }
        Ok(())
    }
}

/// Solves `½ D_m D_s u = -f` on the ball of radius `delta` around the vertex,
/// `u = 0` on its boundary, continuity and the gluing condition at the vertex.
pub fn solve_ball<F: Fn(GraphPoint) -> f64>(spec: &DiffusionSpec, delta: f64, f: F) -> Result<DirichletSolution> {
    let l_min = spec.graph().min_length();
    if !(delta > 0.0) || delta >= l_min {
        return Err(domain(format!("ball radius {delta} must lie in (0, {l_min})")));
    }
    let f_v = f(GraphPoint::Vertex);
    if !f_v.is_finite() {
        return Err(domain("f is not finite at the vertex"));
    }
    let mut parts = Vec::with_capacity(spec.n_edges());
    for e in spec.graph().edges() {
        parts.push(edge_particular(spec, e, delta, &f)?);
    }
    // Continuity: u_e(0) = b_e(0) - c_e s_e(δ) = U; gluing fixes U.
    let mut num = spec.rho() * f_v;
    let mut den = 0.0;
    for (e, p) in spec.graph().edges().zip(&parts) {
        let w = spec.bias()[e.index()] * spec.scale(e).deriv(0.0) / p.s_delta;
        num += w * p.b[0];
        den += w;
    }
    let vertex_value = num / den;
    let mut edges = Vec::with_capacity(parts.len());
    for (e, p) in spec.graph().edges().zip(parts) {
        let s = spec.scale(e);
        let c = (p.b[0] - vertex_value) / p.s_delta;
        let mut u = Vec::with_capacity(p.nodes.len());
        let mut du_right = Vec::with_capacity(p.nodes.len());
        let mut du_left = Vec::with_capacity(p.nodes.len());
        for (i, &x) in p.nodes.iter().enumerate() {
            let sx = s.eval(x);
            u.push(if i + 1 == p.nodes.len() { 0.0 } else { p.b[i] + c * (sx - p.s_delta) });
            let d = s.deriv(x);
            du_right.push((c - 2.0 * p.f_closed[i]) * d);
            du_left.push((c - 2.0 * p.f_open[i]) * d);
        }
        u[0] = vertex_value;
        edges.push(EdgeSolution { nodes: p.nodes, u, du_right, du_left, b: p.b, slope: c });
    }
    Ok(DirichletSolution { delta, vertex_value, edges, bias: spec.bias().to_vec(), rho: spec.rho(), f_vertex: f_v })
}

struct Particular {
    nodes: Vec<f64>,
    b: Vec<f64>,
    /// `∫_(0,x] f dm` at the nodes.
    f_closed: Vec<f64>,
    /// `∫_(0,x) f dm` at the nodes.
    f_open: Vec<f64>,
    s_delta: f64,
}

/// Tabulates `b_e` via `b(x) = 2 (s(δ) - s(x)) ∫_(0,x] f dm + 2 ∫_(x,δ) f (s(δ) - s) dm`.
fn edge_particular<F: Fn(GraphPoint) -> f64>(spec: &DiffusionSpec, e: EdgeId, delta: f64, f: &F) -> Result<Particular> {
    let s = spec.scale(e);
    let m = spec.speed(e);
    let s_delta = s.eval(delta);
    let mut nodes: Vec<f64> = (0..=GRID_CELLS).map(|i| delta * i as f64 / GRID_CELLS as f64).collect();
    for a in m.atoms() {
        if a.position > 0.0 && a.position < delta {
            nodes.push(a.position);
        }
    }
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let fe = |z: f64| {
        let v = f(GraphPoint::on(e, z));
        if v.is_finite() {
            v
        } else {
            f64::NAN
        }
    };
    let n = nodes.len();
    let mut mass_f = Vec::with_capacity(n - 1);
    let mut mass_fs = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let iv = if i + 2 == n {
            Interval::open(nodes[i], nodes[i + 1])
        } else {
            Interval::left_open(nodes[i], nodes[i + 1])
        };
        let a = m.integral_tol(&fe, iv, CELL_TOL)?;
        let b = m.integral_tol(|z| fe(z) * (s_delta - s.eval(z)), iv, CELL_TOL)?;
        if !a.is_finite() || !b.is_finite() {
            return Err(domain(format!("f is not finite on edge {e} of the ball")));
        }
        mass_f.push(a);
        mass_fs.push(b);
    }
    let atom_at = |x: f64| -> f64 { m.atoms().iter().filter(|a| a.position == x).map(|a| a.mass * fe(x)).sum() };
    let mut f_closed = vec![0.0; n];
    for i in 1..n {
        f_closed[i] = f_closed[i - 1] + mass_f[i - 1];
    }
    let f_open: Vec<f64> = nodes.iter().zip(&f_closed).map(|(&x, &c)| c - atom_at(x)).collect();
    let mut tail = vec![0.0; n];
    for i in (0..n - 1).rev() {
        tail[i] = tail[i + 1] + mass_fs[i];
    }
    let b = (0..n)
        .map(|i| 2.0 * (s_delta - s.eval(nodes[i])) * f_closed[i] + 2.0 * tail[i])
        .collect();
    Ok(Particular { nodes, b, f_closed, f_open, s_delta })
}

/// `H_δ(x) = E_x[T_δ]`: the solution with `f ≡ 1`.
pub fn expected_exit_time(spec: &DiffusionSpec, delta: f64) -> Result<DirichletSolution> {
    solve_ball(spec, delta, |_| 1.0)
}

/// `H_δ(v) / δ` for each radius; tends to `ρ` as `δ → 0`.
pub fn vertex_exit_ratios(spec: &DiffusionSpec, deltas: &[f64]) -> Result<Vec<f64>> {
    deltas.iter().map(|&d| Ok(expected_exit_time(spec, d)?.vertex_value / d)).collect()
}

/// Two-sided exit from `(a, b)` on one edge started at `x`: probability of
/// leaving through `b`, and the expected exit time `2 ∫ G_{a,b}(x, y) m(dy)`.
pub fn green_exit_moments(spec: &DiffusionSpec, e: EdgeId, a: f64, x: f64, b: f64) -> Result<(f64, f64)> {
    if e.index() >= spec.n_edges() {
        return Err(domain(format!("unknown edge {e}")));
    }
    if !(0.0 <= a && a < x && x < b && b <= spec.graph().length(e)) {
        return Err(domain(format!("need 0 <= a < x < b <= l_e, got ({a}, {x}, {b})")));
    }
    let s = spec.scale(e);
    let m = spec.speed(e);
    let (sa, sx, sb) = (s.eval(a), s.eval(x), s.eval(b));
    let width = sb - sa;
    let prob = (sx - sa) / width;
    let left = m.integral(|y| s.eval(y) - sa, Interval::left_open(a, x))?;
    let right = m.integral(|y| sb - s.eval(y), Interval::open(x, b))?;
    let time = 2.0 * ((sb - sx) * left + (sx - sa) * right) / width;
    Ok((prob, time))
}

/// Finite-difference curvature check of `H_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureReport {
    /// Largest relative gap between `-½ ΔD_s H` and the speed mass per probe cell.
    pub max_relative_deviation: f64,
    /// `-sum_e β_e H'_b(e, 0+)`.
    pub vertex_jump: f64,
    pub rho: f64,
    /// `(edge, node, finite-difference mass, speed mass)` per interior probe node.
    pub cells: Vec<(usize, f64, f64, f64)>,
}

/// Compares `-½ H_b''(e, dx)` against `m_e(dx)` on a probe grid of
/// `probes` uniform cells per edge, and the vertex jump against `ρ`.
pub fn check_hb_curvature(spec: &DiffusionSpec, b: f64, probes: usize) -> Result<CurvatureReport> {
    if probes < 2 {
        return Err(domain("need at least two probe cells"));
    }
    let sol = expected_exit_time(spec, b)?;
    let mut cells = Vec::new();
    let mut worst: f64 = 0.0;
    for e in spec.graph().edges() {
        let s = spec.scale(e);
        let xs: Vec<f64> = (0..=probes).map(|i| b * i as f64 / probes as f64).collect();
        let hs: Vec<f64> = xs.iter().map(|&x| sol.eval(GraphPoint::on(e, x))).collect::<Result<_>>()?;
        let ss: Vec<f64> = xs.iter().map(|&x| s.eval(x)).collect();
        let slopes: Vec<f64> = (0..probes).map(|i| (hs[i + 1] - hs[i]) / (ss[i + 1] - ss[i])).collect();
        let mid = |i: usize| s.inverse(0.5 * (ss[i] + ss[i + 1]));
        for i in 1..probes {
            let fd = -0.5 * (slopes[i] - slopes[i - 1]);
            let mass = spec.speed(e).mass(Interval::left_open(mid(i - 1), mid(i)))?;
            worst = worst.max((fd - mass).abs() / mass.abs().max(1e-300));
            cells.push((e.index(), xs[i], fd, mass));
        }
    }
    let vertex_jump = -spec
        .graph()
        .edges()
        .map(|e| spec.bias()[e.index()] * sol.vertex_derivative(e))
        .sum::<f64>();
    Ok(CurvatureReport { max_relative_deviation: worst, vertex_jump, rho: spec.rho(), cells })
}
