use rayon::prelude::*;

use super::{ks_test, mean_stderr, McReport, DEFAULT_Z};
use crate::error::{domain, Result};
use crate::graph::{EdgeId, GraphPoint};
use crate::measure::{DiffusionSpec, EdgeMeasure, Interval};
use crate::timechange::{realized_qv, SynthesisSettings, Synthesizer};
use crate::walsh::{flags, local_time_field, Path, Seed};

/// Both sides of a pathwise identity at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl ResidualReport {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    /// Residual relative to the left side; zero when both sides vanish.
    pub fn relative(&self) -> f64 {
        if self.lhs == 0.0 && self.rhs == 0.0 {
            0.0
        } else {
            self.residual() / self.lhs.abs().max(f64::MIN_POSITIVE)
        }
    }

    pub fn to_report(&self, tolerance: f64) -> McReport {
        McReport::exact(self.name.clone(), self.relative(), 0.0, 1, self.relative() <= tolerance)
            .with_meta("lhs", self.lhs)
            .with_meta("rhs", self.rhs)
            .with_meta("tolerance", tolerance)
    }
}

fn grid_index(path: &Path, t: f64) -> Result<usize> {
    if !(t >= 0.0) || t > path.horizon() * (1.0 + 1e-12) {
        return Err(domain(format!("time {t} outside [0, {}]", path.horizon())));
    }
    Ok((((t / path.dt) * (1.0 + 1e-12)).floor() as usize).min(path.n_steps()))
}

fn cell(j: usize, h: f64) -> Interval {
    if j == 0 {
        Interval::open(0.0, h)
    } else {
        Interval::right_open(j as f64 * h, (j + 1) as f64 * h)
    }
}

/// First occupation formula: `∫_0^t f(X) dQV` against
/// `sum_e sum_j L^{e,y_j}_t f_e(y_j + h/2) h`.
pub fn check_occupation_i<F: Fn(GraphPoint) -> f64>(path: &Path, f: F, t: f64, h: f64) -> Result<ResidualReport> {
    let k = grid_index(path, t)?;
    let lhs: f64 = (0..k).map(|i| f(path.point(i)) * path.dqv(i)).sum();
    let field = local_time_field(path, h, &[t])?;
    let mut rhs = 0.0;
    for e in 0..field.n_edges {
        for (j, l) in field.edge_cells(0, e).iter().enumerate() {
            if *l > 0.0 {
                rhs += l * f(GraphPoint::on(EdgeId(e), (j as f64 + 0.5) * h)) * h;
            }
        }
    }
    Ok(ResidualReport { name: "occupation_i".into(), lhs, rhs })
}

/// Second occupation formula: `∫_0^t f(X_s) ds` against
/// `sum_e sum_j L^{e,y_j}_t ∫_{cell j} f_e dm_e + (ρ/2) f(v) L^{0+}_t`.
/// The path must be NSE with `dqv` its quadratic variation.
pub fn check_occupation_ii<F: Fn(GraphPoint) -> f64>(
    path: &Path,
    spec: &DiffusionSpec,
    f: F,
    t: f64,
    h: f64,
) -> Result<ResidualReport> {
    if !spec.is_nse() {
        return Err(domain("second occupation formula needs a natural-scale spec"));
    }
    let k = grid_index(path, t)?;
    let lhs: f64 = (0..k).map(|i| f(path.point(i))).sum::<f64>() * path.dt;
    let field = local_time_field(path, h, &[t])?;
    let mut rhs = 0.5 * spec.rho() * f(GraphPoint::Vertex) * field.vertex(0);
    for e in spec.graph().edges() {
        let m = spec.speed(e);
        let l_e = spec.graph().length(e);
        for (j, l) in field.edge_cells(0, e.index()).iter().enumerate() {
            if *l > 0.0 {
                let mut iv = cell(j, h);
                iv.hi = iv.hi.min(l_e);
                rhs += l * m.integral(|y| f(GraphPoint::on(e, y)), iv)?;
            }
        }
    }
    Ok(ResidualReport { name: "occupation_ii".into(), lhs, rhs })
}

type EdgeFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Per-edge difference of convex functions: values, left derivative (its
/// value at 0 is read as `f'(0+)`) and curvature measure on `(0, l_e)`.
pub struct TestFunction {
    pub value: Vec<EdgeFn>,
    pub deriv: Vec<EdgeFn>,
    pub curvature: Vec<EdgeMeasure>,
}

impl TestFunction {
    /// `f(e, x) = slope_e x`.
    pub fn linear(slopes: &[f64]) -> Self {
        TestFunction {
            value: slopes.iter().map(|&a| Box::new(move |x: f64| a * x) as EdgeFn).collect(),
            deriv: slopes.iter().map(|&a| Box::new(move |_: f64| a) as EdgeFn).collect(),
            curvature: vec![EdgeMeasure::default(); slopes.len()],
        }
    }

    /// `f(e, x) = x^2` on every edge.
    pub fn square(n_edges: usize) -> Self {
        TestFunction {
            value: (0..n_edges).map(|_| Box::new(|x: f64| x * x) as EdgeFn).collect(),
            deriv: (0..n_edges).map(|_| Box::new(|x: f64| 2.0 * x) as EdgeFn).collect(),
            curvature: (0..n_edges)
                .map(|_| EdgeMeasure::with_density(crate::measure::Density::Constant { value: 2.0 }))
                .collect(),
        }
    }

    fn eval(&self, p: GraphPoint) -> f64 {
        match p {
            GraphPoint::Vertex => (self.value[0])(0.0),
            GraphPoint::Edge { edge, radius } => (self.value[edge.index()])(radius),
        }
    }
}

/// Residual of the Itô–Tanaka formula at a list of times.
#[derive(Clone, Debug, PartialEq)]
pub struct TanakaResidual {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl TanakaResidual {
    pub fn sup(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn terminal(&self) -> f64 {
        *self.residuals.last().unwrap_or(&0.0)
    }
}

/// `f(X_t) - f(X_0)` minus the stochastic integral with graph-aware
/// increments (a step through the vertex counts `-R_k` on its departing edge), the edge curvature term and the vertex kink term
/// `½ sum_e β_e L^{0+}_t f'_e(0+)`, at each requested time.
pub fn check_ito_tanaka(path: &Path, f: &TestFunction, bias: &[f64], h: f64, times: &[f64]) -> Result<TanakaResidual> {
    let n = path.n_edges;
    if f.value.len() != n || f.deriv.len() != n || f.curvature.len() != n || bias.len() != n {
        return Err(domain(format!("test function and bias must cover all {n} edges")));
    }
    let field = local_time_field(path, h, times)?;
    let kink: f64 = (0..n).map(|e| bias[e] * (f.deriv[e])(0.0)).sum();
    let mut out = Vec::with_capacity(times.len());
    let mut order: Vec<(usize, usize)> = times.iter().enumerate().map(|(i, &t)| Ok((grid_index(path, t)?, i))).collect::<Result<_>>()?;
    order.sort();
    out.resize(times.len(), 0.0);
    let f0 = f.eval(path.point(0));
    let mut stoch = 0.0;
    let mut k = 0;
    for (stop, ti) in order {
        while k < stop {
            let r = path.radii[k];
            if r > 0.0 {
                let e = path.edges[k] as usize;
                // A step through the vertex moves the departing edge only down to it.
                let through = path.edges[k + 1] as usize != e || path.flags[k + 1] & flags::RENEWAL != 0;
                let next = if through { 0.0 } else { path.radii[k + 1] };
                stoch += (f.deriv[e])(r) * (next - r);
            }
            k += 1;
        }
        let mut curv = 0.0;
        for e in 0..n {
            let m = &f.curvature[e];
            if m.density.is_none() && m.atoms.is_empty() && m.singular.is_none() {
                continue;
            }
            for (j, l) in field.edge_cells(ti, e).iter().enumerate() {
                if *l > 0.0 {
                    curv += l * m.mass(cell(j, h))?;
                }
            }
        }
        let lhs = f.eval(path.point(stop)) - f0;
        out[ti] = lhs - stoch - 0.5 * curv - 0.5 * kink * field.vertex(ti);
    }
    Ok(TanakaResidual { times: times.to_vec(), residuals: out })
}

/// Strict increase of the stride-1 realized QV wherever the path moves.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    /// Steps on which the path moves.
    pub checked: usize,
    /// Moving steps without a (representable) QV increase, plus frozen steps
    /// outside a vertex hold.
    pub violations: usize,
    /// Longest run of frozen steps.
    pub longest_flat: usize,
}

/// Between two output times the QV must increase unless the path is frozen
/// on the whole stretch, and a frozen path must sit in a vertex hold.
pub fn check_strict_monotonicity(path: &Path) -> MonotonicityReport {
    let q = realized_qv(path, 1);
    let (mut checked, mut violations, mut run, mut longest_flat) = (0, 0, 0, 0);
    for i in 0..path.len().saturating_sub(1) {
        let same_edge = path.edges[i + 1] == path.edges[i] || path.radii[i] == 0.0;
        let frozen = path.radii[i + 1] == path.radii[i] && same_edge;
        if frozen {
            run += 1;
            longest_flat = longest_flat.max(run);
            if path.flags[i + 1] & flags::HOLD == 0 || path.radii[i] != 0.0 {
                violations += 1;
            }
        } else {
            run = 0;
            checked += 1;
            let (r0, r1) = (path.radii[i], path.radii[i + 1]);
            let d = if path.edges[i + 1] == path.edges[i] { (r1 - r0).abs() } else { r0 + r1 };
            // Increments below the float resolution of the running sum cannot show.
            if !(q.values[i + 1] > q.values[i]) && d * d > f64::EPSILON * q.values[i] {
                violations += 1;
            }
        }
    }
    MonotonicityReport { checked, violations, longest_flat }
}

/// Mean of `L^{e,v}_T / L^{0+}_T` over the paths with `L^{0+}_T > 0`, one
/// report per edge with target `β_e`.
pub fn check_directional_split(paths: &[Path], bias: &[f64], h: f64) -> Result<Vec<McReport>> {
    let n_edges = bias.len();
    let ratios: Vec<Option<Vec<f64>>> = paths
        .par_iter()
        .map(|p| {
            let f = local_time_field(p, h, &[p.horizon()])?;
            let total = f.vertex(0);
            if total > 0.0 {
                Ok(Some((0..n_edges).map(|e| f.vertex_directional(0, e) / total).collect()))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let kept: Vec<Vec<f64>> = ratios.into_iter().flatten().collect();
    let sum_gap = kept.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    Ok((0..n_edges)
        .map(|e| {
            let xs: Vec<f64> = kept.iter().map(|r| r[e]).collect();
            let (m, se) = mean_stderr(&xs);
            McReport::new(format!("directional_split_e{e}"), m, se, bias[e], xs.len(), DEFAULT_Z, 0.0)
                .with_meta("h", h)
                .with_meta("max_sum_gap", sum_gap)
        })
        .collect())
}

const MAX_DOUBLINGS: usize = 6;

/// Parameters of the DDS round trip.
#[derive(Clone, Copy, Debug)]
pub struct DdsSettings {
    pub synthesis: SynthesisSettings,
    /// Initial horizon; doubled per path until the clock reaches `clock_time`.
    pub horizon: f64,
    /// QV-clock time at which the radial marginal is compared.
    pub clock_time: f64,
}

/// Synthesises natural-scale paths `Y = s(X)` of `spec` from the vertex, reads
/// them at the first grid time whose realized QV reaches `clock_time`, and
/// KS-tests the radii against the reflected Brownian marginal `|N(0, clock_time)|`.
pub fn check_dds_roundtrip(spec: &DiffusionSpec, n_paths: usize, settings: DdsSettings, seed: Seed) -> Result<McReport> {
    if n_paths < 10_000 {
        return Err(domain(format!("KS test needs at least 10^4 paths, got {n_paths}")));
    }
    let syn = Synthesizer::new(spec, settings.synthesis)?.on_natural_scale();
    let u = settings.clock_time;
    let radii: Vec<Option<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            // Same stream with a longer horizon extends the same path.
            let mut horizon = settings.horizon;
            for _ in 0..=MAX_DOUBLINGS {
                let p = syn.path(GraphPoint::Vertex, horizon, seed.path(i))?;
                let q = realized_qv(&p, 1);
                let k = q.values.partition_point(|&v| v < u);
                if k < p.len() {
                    return Ok(Some(p.radii[k]));
                }
                horizon *= 2.0;
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let unreached = radii.iter().filter(|r| r.is_none()).count();
    let sample: Vec<f64> = radii.into_iter().flatten().collect();
    let sd = u.sqrt();
    let (d, p) = ks_test(&sample, |r| statrs::function::erf::erf(r / (sd * std::f64::consts::SQRT_2)));
    let pass = unreached == 0 && p > 0.01;
    Ok(McReport::exact("dds_roundtrip_ks", p, 0.01, n_paths, pass)
        .with_meta("ks_statistic", d)
        .with_meta("unreached", unreached as u64)
        .with_meta("clock_time", u)
        .with_meta("dt", settings.synthesis.dt)
        .with_meta("seed", seed.value)
        .with_meta("spec_hash", spec.hash()))
}
