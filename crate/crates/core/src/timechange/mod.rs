//! Additive functionals, right inverses and the time-change synthesis pipelines.

mod clock;
mod compose;
mod synth;

use std::io::Write;

use crate::error::{domain, Result};
use crate::graph::distance;
use crate::walsh::Path;

pub use clock::{build_a, ClockModel};
pub use compose::sticky_compose;
pub use synth::{synthesize_diffusion, ExitSample, SynthesisSettings, Synthesizer};

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Nondecreasing piecewise-linear clock `A` with `A(t_0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveFunctional {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl AdditiveFunctional {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(domain("additive functional needs matching, nonempty grids"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("grid times must increase"));
        }
        if values.windows(2).any(|w| !(w[1] >= w[0])) || values[0] != 0.0 {
            return Err(domain("additive functional must start at 0 and be nondecreasing"));
        }
        Ok(AdditiveFunctional { times, values })
    }

    /// `A` on a uniform grid of step `dt`.
    pub fn on_grid(dt: f64, values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len()).map(|k| k as f64 * dt).collect();
        Self::new(times, values)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] > w[0])
    }

    /// Smallest index gap `K` such that `A(t_{k+K}) > A(t_k)` for every `k`.
    pub fn longest_flat(&self) -> usize {
        let mut best = 0;
        let mut run = 0;
        for w in self.values.windows(2) {
            if w[1] > w[0] {
                run = 0;
            } else {
                run += 1;
                best = best.max(run);
            }
        }
        best
    }

    /// `γ(u) = inf { s : A(s) > u }`.
    pub fn right_inverse(&self) -> TimeChange {
        TimeChange { a: self.values.clone(), t: self.times.clone() }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,A")?;
        for (t, a) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{a}")?;
        }
        Ok(())
    }
}

/// Right inverse of an [`AdditiveFunctional`]: the breakpoints transposed.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeChange {
    a: Vec<f64>,
    t: Vec<f64>,
}

impl TimeChange {
    /// `γ(u)`; right-continuous, jumps across flats of `A`. Returns `+∞`
    /// when `u` is at or beyond the last value of `A`.
    pub fn eval(&self, u: f64) -> f64 {
        if u < self.a[0] {
            return self.t[0];
        }
        let m = self.a.partition_point(|&v| v <= u);
        if m == self.a.len() {
            return f64::INFINITY;
        }
        let (a0, a1) = (self.a[m - 1], self.a[m]);
        self.t[m - 1] + (u - a0) / (a1 - a0) * (self.t[m] - self.t[m - 1])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "u,gamma")?;
        for (a, t) in self.a.iter().zip(&self.t) {
            writeln!(w, "{a},{t}")?;
        }
        Ok(())
    }
}

/// `γ` as a standalone operation.
pub fn right_inverse(a: &AdditiveFunctional) -> TimeChange {
    a.right_inverse()
}

/// Realized quadratic variation averaged over `stride` interleaved subgrids:
/// `Q(t_i) = (1/K) sum_{K <= j <= i} d(X_j, X_{j-K})^2` with the graph metric.
pub fn realized_qv(path: &Path, stride: usize) -> AdditiveFunctional {
    let k = stride.max(1);
    let mut values = Vec::with_capacity(path.len());
    let mut acc = Kahan::default();
    let inv = 1.0 / k as f64;
    for j in 0..path.len() {
        if j >= k {
            let d = distance(path.point(j), path.point(j - k));
            acc.add(d * d * inv);
        }
        // Compensation can step back by an ulp; the clock must not.
        let v = values.last().map_or(acc.value(), |&last: &f64| acc.value().max(last));
        values.push(v);
    }
    AdditiveFunctional::on_grid(path.dt, values).expect("realized QV is a valid clock")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphPoint;
    use crate::walsh::{simulate_walsh, Bias, Seed};

    #[test]
    fn identity_and_linear_inverses() {
        let a = AdditiveFunctional::on_grid(0.5, vec![0.0, 0.5, 1.0, 1.5]).unwrap();
        let g = a.right_inverse();
        for u in [0.0, 0.3, 1.2] {
            assert!((g.eval(u) - u).abs() < 1e-15);
        }
        let a = AdditiveFunctional::on_grid(0.5, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let g = a.right_inverse();
        assert!((g.eval(1.4) - 0.7).abs() < 1e-15);
        assert_eq!(g.eval(3.0), f64::INFINITY);
    }

    #[test]
    fn flat_makes_gamma_jump() {
        // A(t) = t on [0, 1], flat on [1, 2], then t - 1.
        let a = AdditiveFunctional::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        let g = a.right_inverse();
        assert!((g.eval(1.0 - 1e-12) - 1.0).abs() < 1e-9);
        assert_eq!(g.eval(1.0), 2.0);
        assert!((g.eval(1.5) - 2.5).abs() < 1e-15);
        assert_eq!(a.longest_flat(), 1);
        assert!(!a.is_strictly_increasing());
    }

    #[test]
    fn rejects_decreasing() {
        assert!(AdditiveFunctional::on_grid(1.0, vec![0.0, 1.0, 0.5]).is_err());
        assert!(AdditiveFunctional::on_grid(1.0, vec![0.1, 1.0]).is_err());
    }

    #[test]
    fn walsh_realized_qv_is_clock() {
        let b = Bias::new(&[0.5, 0.3, 0.2]).unwrap();
        let mut rel = 0.0;
        for i in 0..20 {
            let p = simulate_walsh(GraphPoint::Vertex, &b, 1.0, 1e-4, Seed::new(2).path(i)).unwrap();
            let q = realized_qv(&p, 1);
            rel += (q.values.last().unwrap() - 1.0).abs() / 20.0;
        }
        assert!(rel < 0.02, "{rel}");
    }
}
