//! Per-edge scale functions.

use serde::Serialize;

use super::quadrature::{gauss_legendre, integrate};
use crate::error::{Error, Result};

/// Parameters of a translated CIR-type edge: drift `kappa (theta - x)` and
/// diffusion coefficient `sigma^2 (x + shift)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CirParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub shift: f64,
}

impl CirParams {
    /// The edge `e1` of the worked example: `b(x) = 1 - x`, `sigma^2(x) = x + 1`.
    pub const EXAMPLE: CirParams = CirParams { kappa: 1.0, theta: 1.0, sigma: 1.0, shift: 1.0 };

    pub fn validate(&self) -> Result<()> {
        let ok = [self.kappa, self.theta, self.sigma, self.shift].iter().all(|v| v.is_finite())
            && self.sigma > 0.0
            && self.shift > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("bad CIR parameters {self:?}")))
        }
    }

    pub(crate) fn gamma(&self) -> f64 {
        2.0 * self.kappa / (self.sigma * self.sigma)
    }

    /// `ln s'(x)`.
    pub fn log_scale_density(&self, x: f64) -> f64 {
        let g = self.gamma();
        -g * (self.theta + self.shift) * ((x + self.shift) / self.shift).ln() + g * x
    }

    /// `s'(x)`.
    pub fn scale_density(&self, x: f64) -> f64 {
        self.log_scale_density(x).exp()
    }

    /// Density of the speed measure, `1 / (s'(x) sigma^2(x))`.
    pub fn speed_density(&self, x: f64) -> f64 {
        (-self.log_scale_density(x)).exp() / (self.sigma * self.sigma * (x + self.shift))
    }
}

/// CIR scale function, tabulated cumulatively on a fine grid with exact
/// Gauss–Legendre integration of the closed-form derivative inside cells.
#[derive(Clone, Debug, Serialize)]
pub struct CirScale {
    pub params: CirParams,
    #[serde(skip)]
    table: Vec<f64>,
}

const CIR_STEP: f64 = 1.0 / 64.0;
const CIR_SPAN: f64 = 32.0;

impl PartialEq for CirScale {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl CirScale {
    pub fn new(params: CirParams) -> Result<Self> {
        params.validate()?;
        let n = (CIR_SPAN / CIR_STEP) as usize;
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for k in 0..n {
            let a = k as f64 * CIR_STEP;
            acc += gauss_legendre(|x| params.scale_density(x), a, a + CIR_STEP);
            table.push(acc);
        }
        Ok(CirScale { params, table })
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.table.len() - 1;
        let top = n as f64 * CIR_STEP;
        let p = self.params;
        if x <= top {
            let k = ((x / CIR_STEP) as usize).min(n);
            let a = k as f64 * CIR_STEP;
            if x == a {
                return self.table[k];
            }
            self.table[k] + gauss_legendre(|y| p.scale_density(y), a, x)
        } else {
            let tol = 1e-12 * self.table[n].max(1.0);
            match integrate(|y| p.scale_density(y), top, x, tol) {
                Ok(v) => self.table[n] + v,
                Err(_) => f64::INFINITY,
            }
        }
    }

    /// `s(x) / s'(x)` without forming either factor at large `x`.
    pub(crate) fn ratio_to_deriv(&self, x: f64) -> f64 {
        let n = self.table.len() - 1;
        let top = n as f64 * CIR_STEP;
        let p = self.params;
        if x <= top {
            return self.eval(x) / p.scale_density(x);
        }
        let g = p.gamma();
        let k = g * (p.theta + p.shift);
        // phi(x - t) - phi(x) with phi = ln s'.
        let dphi = |t: f64| -g * t + k * (t / (x - t + p.shift)).ln_1p();
        let slope_top = g - k / (top + p.shift);
        let width = if slope_top > 0.5 { (80.0 / slope_top).min(x - top) } else { x - top };
        let tail = integrate(|t| dphi(t).exp(), 0.0, width, 1e-13).unwrap_or(f64::NAN);
        tail + (self.table[n].ln() - p.log_scale_density(x)).exp()
    }

    fn inverse(&self, y: f64) -> f64 {
        let n = self.table.len() - 1;
        let (mut lo, mut hi) = if y <= self.table[n] {
            let k = self.table.partition_point(|&v| v <= y).saturating_sub(1).min(n - 1);
            (k as f64 * CIR_STEP, (k + 1) as f64 * CIR_STEP)
        } else {
            let mut hi = 2.0 * n as f64 * CIR_STEP;
            while self.eval(hi) < y {
                hi *= 2.0;
                if !hi.is_finite() {
                    return f64::INFINITY;
                }
            }
            (n as f64 * CIR_STEP, hi)
        };
        // Newton with bisection safeguard.
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.eval(x) - y;
            if f == 0.0 {
                return x;
            }
            if f.abs() <= 1e-15 * y.abs().max(1e-300) {
                return x;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= 1e-15 * hi.max(1e-300) {
                break;
            }
            let step = x - f / self.params.scale_density(x);
            x = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        }
        x
    }
}

/// Strictly increasing piecewise-linear table starting at `(0, 0)`;
/// extended linearly past the last node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotoneTable {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl MonotoneTable {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::InvalidSpec("scale table needs at least two matching nodes".into()));
        }
        if x[0] != 0.0 || y[0] != 0.0 {
            return Err(Error::InvalidSpec("scale table must start at (0, 0)".into()));
        }
        for w in x.windows(2).zip(y.windows(2)) {
            let (wx, wy) = w;
            if !(wx[1] > wx[0]) || !(wy[1] > wy[0]) || !wx[1].is_finite() || !wy[1].is_finite() {
                return Err(Error::InvalidSpec("scale table must be strictly increasing".into()));
            }
        }
        Ok(MonotoneTable { x, y })
    }

    fn cell(nodes: &[f64], v: f64) -> usize {
        nodes.partition_point(|&t| t <= v).saturating_sub(1).min(nodes.len() - 2)
    }

    fn eval(&self, v: f64) -> f64 {
        let k = Self::cell(&self.x, v);
        let slope = (self.y[k + 1] - self.y[k]) / (self.x[k + 1] - self.x[k]);
        self.y[k] + slope * (v - self.x[k])
    }

    fn deriv(&self, v: f64) -> f64 {
        let k = Self::cell(&self.x, v);
        (self.y[k + 1] - self.y[k]) / (self.x[k + 1] - self.x[k])
    }

    fn inverse(&self, v: f64) -> f64 {
        let k = Self::cell(&self.y, v);
        if v == self.y[k] {
            return self.x[k];
        }
        let slope = (self.x[k + 1] - self.x[k]) / (self.y[k + 1] - self.y[k]);
        self.x[k] + slope * (v - self.y[k])
    }
}

/// Scale function `s_e` of one edge, normalised so that `s_e(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum EdgeScale {
    Natural,
    Linear { slope: f64 },
    Tabulated(MonotoneTable),
    Cir(CirScale),
}

impl EdgeScale {
    pub fn linear(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::InvalidSpec(format!("scale slope must be positive, got {slope}")));
        }
        Ok(EdgeScale::Linear { slope })
    }

    pub fn tabulated(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Ok(EdgeScale::Tabulated(MonotoneTable::new(x, y)?))
    }

    pub fn cir(params: CirParams) -> Result<Self> {
        Ok(EdgeScale::Cir(CirScale::new(params)?))
    }

    pub fn is_natural(&self) -> bool {
        match self {
            EdgeScale::Natural => true,
            EdgeScale::Linear { slope } => *slope == 1.0,
            _ => false,
        }
    }

    /// `s_e(x)` for `x >= 0`.
    pub fn eval(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return f64::INFINITY;
        }
        match self {
            EdgeScale::Natural => x,
            EdgeScale::Linear { slope } => slope * x,
            EdgeScale::Tabulated(t) => t.eval(x),
            EdgeScale::Cir(c) => c.eval(x),
        }
    }

    /// Right derivative `s'_e(x)`.
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            EdgeScale::Natural => 1.0,
            EdgeScale::Linear { slope } => *slope,
            EdgeScale::Tabulated(t) => t.deriv(x),
            EdgeScale::Cir(c) => c.params.scale_density(x),
        }
    }

    /// Inverse scale `q_e(y)`.
    pub fn inverse(&self, y: f64) -> f64 {
        if y == f64::INFINITY {
            return f64::INFINITY;
        }
        match self {
            EdgeScale::Natural => y,
            EdgeScale::Linear { slope } => y / slope,
            EdgeScale::Tabulated(t) => t.inverse(y),
            EdgeScale::Cir(c) => c.inverse(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_scale() {
        let s = EdgeScale::linear(2.0).unwrap();
        assert_eq!(s.eval(0.4), 0.8);
        assert_eq!(s.inverse(0.8), 0.4);
        assert_eq!(s.eval(0.0), 0.0);
        assert!(EdgeScale::linear(0.0).is_err());
    }

    #[test]
    fn table_roundtrip_on_nodes() {
        let s = EdgeScale::tabulated(vec![0.0, 0.5, 1.0, 3.0], vec![0.0, 1.0, 1.5, 2.0]).unwrap();
        for (x, y) in [(0.0, 0.0), (0.5, 1.0), (1.0, 1.5), (3.0, 2.0)] {
            assert_eq!(s.eval(x), y);
            assert_eq!(s.inverse(y), x);
        }
        assert_eq!(s.deriv(0.0), 2.0);
        assert_eq!(s.eval(5.0), 2.5);
        assert!(EdgeScale::tabulated(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn cir_scale_matches_quadrature() {
        let p = CirParams::EXAMPLE;
        let s = EdgeScale::cir(p).unwrap();
        for x in [0.01, 0.3, 1.7, 10.0, 40.0] {
            let want = integrate(|y| (1.0 + y).powi(-4) * (2.0 * y).exp(), 0.0, x, 1e-12).unwrap();
            let got = s.eval(x);
            assert!(((got - want) / want).abs() < 1e-10, "x={x} {got} {want}");
            assert!((s.inverse(got) - x).abs() < 1e-10 * x.max(1.0));
        }
        assert_eq!(s.deriv(0.0), 1.0);
        assert!((p.speed_density(1.0) - 8.0 * (-2f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn cir_inverse_dense_roundtrip() {
        let s = EdgeScale::cir(CirParams::EXAMPLE).unwrap();
        for k in 0..20_000 {
            let y = 1e-3 * k as f64 * (1.0 + 0.37 * k as f64 / 1000.0);
            let back = s.eval(s.inverse(y));
            assert!((back - y).abs() <= 1e-9 * y.max(1.0), "y={y} back={back}");
        }
    }
}
