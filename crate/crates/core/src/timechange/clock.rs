//! Discretised clock `A` built from Walsh steps.

use std::collections::HashMap;

use super::{AdditiveFunctional, Kahan};
use crate::error::{domain, Error, Result};
use crate::graph::EdgeId;
use crate::measure::{DiffusionSpec, Interval};
use crate::walsh::Path;

/// Per-cell speed rates of an NSE spec on the bandwidth-`h` grid.
///
/// A Walsh step starting in cell `j` of edge `e` advances the clock by
/// `dt * m_e([j h, (j + 1) h)) / h`. [`build_a`] adds `(rho / 2) dt / h` in cell 0;
/// the synthesizer holds at the vertex for `(rho / 2)` times the sampled local time.
#[derive(Clone, Debug)]
pub struct ClockModel {
    spec: DiffusionSpec,
    h: f64,
    rates: Vec<Vec<f64>>,
}

/// Radius up to which cell rates are tabulated eagerly.
const TABLE_SPAN: f64 = 8.0;

impl ClockModel {
    /// `spec` must already be on natural scale (see [`DiffusionSpec::pushforward`]).
    pub fn new(spec: &DiffusionSpec, h: f64) -> Result<Self> {
        if !spec.is_nse() {
            return Err(domain("clock model needs a natural-scale spec; push it forward first"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(domain(format!("bandwidth must be positive, got {h}")));
        }
        let mut rates = Vec::with_capacity(spec.n_edges());
        for e in spec.graph().edges() {
            let m = spec.speed(e);
            let atoms = m.atoms();
            for w in atoms.windows(2) {
                if (w[0].position / h).floor() == (w[1].position / h).floor() {
                    return Err(Error::Refinement {
                        edge: e.index(),
                        bandwidth: h,
                        first: w[0].position,
                        second: w[1].position,
                    });
                }
            }
            let span = TABLE_SPAN.min(spec.graph().length(e));
            let n = (span / h).ceil() as usize;
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                row.push(cell_rate(spec, e, j, h)?);
            }
            rates.push(row);
        }
        Ok(ClockModel { spec: spec.clone(), h, rates })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn rho(&self) -> f64 {
        self.spec.rho()
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    /// `m_e(cell(r)) / h`.
    pub fn rate(&self, edge: usize, r: f64) -> f64 {
        let j = (r / self.h) as usize;
        match self.rates[edge].get(j) {
            Some(&v) => v,
            None => cell_rate(&self.spec, EdgeId(edge), j, self.h).unwrap_or(f64::NAN),
        }
    }

    /// [`ClockModel::rate`], memoising cells past the eager table in `cache`.
    pub fn rate_cached(&self, edge: usize, r: f64, cache: &mut HashMap<(usize, usize), f64>) -> f64 {
        let j = (r / self.h) as usize;
        match self.rates[edge].get(j) {
            Some(&v) => v,
            None => *cache
                .entry((edge, j))
                .or_insert_with(|| cell_rate(&self.spec, EdgeId(edge), j, self.h).unwrap_or(f64::NAN)),
        }
    }

    /// Vertex hold attached to a step of length `dt` starting at radius `r`.
    pub fn hold(&self, r: f64, dt: f64) -> f64 {
        if r < self.h {
            0.5 * self.spec.rho() * dt / self.h
        } else {
            0.0
        }
    }

    /// Clock spent at the vertex for a vertex local time `l0 = L^{0+}`.
    pub fn vertex_hold(&self, l0: f64) -> f64 {
        0.5 * self.spec.rho() * l0
    }
}

/// Vertex local time `L^{0+}` of a reflected Brownian step of length `dt`
/// from radius `a` to `b`, given that it touched 0, drawn by inversion from
/// `u` in `(0, 1]`. With `s = a + b`, half of it exceeds `x` with probability
/// `exp(-((s + x)^2 - s^2) / (2 dt))`.
pub fn touch_local_time(a: f64, b: f64, dt: f64, u: f64) -> f64 {
    let s = a + b;
    2.0 * ((s * s - 2.0 * dt * u.ln()).sqrt() - s)
}

fn cell_rate(spec: &DiffusionSpec, e: EdgeId, j: usize, h: f64) -> Result<f64> {
    let lo = j as f64 * h;
    let hi = ((j + 1) as f64 * h).min(spec.graph().length(e));
    let mass = spec.speed(e).mass(Interval::right_open(lo, hi))?;
    Ok(mass / h)
}

/// `A(t_k) = sum_{i<k} dQV_i (m^Y_{J_i}(cell(R_i)) + (rho^Y / 2) 1{R_i < h}) / h`
/// for a path on the quadratic-variation clock of an NSE spec.
pub fn build_a(path: &Path, spec_y: &DiffusionSpec, h: f64) -> Result<AdditiveFunctional> {
    let model = ClockModel::new(spec_y, h)?;
    let mut values = Vec::with_capacity(path.len());
    let mut acc = Kahan::default();
    values.push(0.0);
    for k in 0..path.n_steps() {
        let q = path.dqv(k);
        let r = path.radii[k];
        acc.add(q * model.rate(path.edges[k] as usize, r) + model.hold(r, q));
        values.push(acc.value());
    }
    AdditiveFunctional::on_grid(path.dt, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphPoint, StarGraph};
    use crate::measure::{Density, EdgeMeasure, EdgeScale};
    use crate::walsh::{simulate_walsh, Bias, Seed};

    fn walsh_path() -> Path {
        let b = Bias::new(&[0.5, 0.3, 0.2]).unwrap();
        simulate_walsh(GraphPoint::Vertex, &b, 1.0, 1e-3, Seed::new(8)).unwrap()
    }

    #[test]
    fn lebesgue_is_identity_clock() {
        let spec = DiffusionSpec::walsh(&[0.5, 0.3, 0.2], 0.0).unwrap();
        let a = build_a(&walsh_path(), &spec, 0.03).unwrap();
        for (t, v) in a.times.iter().zip(&a.values) {
            assert!((t - v).abs() < 1e-9);
        }
        assert!(a.is_strictly_increasing());
    }

    #[test]
    fn doubled_speed_doubles_clock() {
        let spec = DiffusionSpec::new(
            StarGraph::unbounded(3).unwrap(),
            vec![EdgeScale::Natural; 3],
            vec![EdgeMeasure::with_density(Density::Constant { value: 2.0 }); 3],
            vec![0.5, 0.3, 0.2],
            0.0,
        )
        .unwrap();
        let a = build_a(&walsh_path(), &spec, 0.03).unwrap();
        assert!((a.values.last().unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn atom_cell_spikes() {
        let spec = DiffusionSpec::new(
            StarGraph::unbounded(1).unwrap(),
            vec![EdgeScale::Natural],
            vec![EdgeMeasure::lebesgue().with_atom(1.0, 1.0)],
            vec![1.0],
            0.0,
        )
        .unwrap();
        let h = 0.05;
        let model = ClockModel::new(&spec, h).unwrap();
        assert!((model.rate(0, 0.97) - 1.0).abs() < 1e-9);
        assert!((model.rate(0, 1.02) - (1.0 + 1.0 / h)).abs() < 1e-9);
        assert!((model.rate(0, 1.06) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn atoms_sharing_a_cell_are_rejected() {
        let spec = DiffusionSpec::new(
            StarGraph::unbounded(1).unwrap(),
            vec![EdgeScale::Natural],
            vec![EdgeMeasure::lebesgue().with_atom(1.0, 1.0).with_atom(1.01, 1.0)],
            vec![1.0],
            0.0,
        )
        .unwrap();
        assert!(matches!(ClockModel::new(&spec, 0.1), Err(Error::Refinement { .. })));
        assert!(ClockModel::new(&spec, 0.005).is_ok());
    }

    #[test]
    fn sticky_clock_adds_vertex_time() {
        let spec = DiffusionSpec::walsh(&[0.5, 0.3, 0.2], 1.0).unwrap();
        let p = walsh_path();
        let h = 0.03;
        let a = build_a(&p, &spec, h).unwrap();
        let lt = crate::walsh::local_time_field(&p, h, &[1.0]).unwrap();
        let want = 1.0 + 0.5 * lt.vertex(0);
        assert!((a.values.last().unwrap() - want).abs() < 1e-9);
    }
}
