//! Boundary classification by truncated double integrals.

use std::fmt;

use serde::Serialize;

use super::quadrature::integrate;
use super::scale::EdgeScale;
use super::speed::{Density, EdgeMeasure, Interval};
use crate::error::{Error, Result};
use crate::graph::EdgeId;

/// Behaviour of the far end of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryClass {
    Regular,
    Exit,
    Entry,
    Natural,
}

impl fmt::Display for BoundaryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryClass::Regular => "regular",
            BoundaryClass::Exit => "exit",
            BoundaryClass::Entry => "entry",
            BoundaryClass::Natural => "natural",
        })
    }
}

/// Outcome of an improper-integral probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Growth {
    Finite(f64),
    Divergent,
}

impl Growth {
    pub fn is_finite(&self) -> bool {
        matches!(self, Growth::Finite(_))
    }
}

/// Thresholds for the divergence test.
#[derive(Clone, Copy, Debug)]
pub struct ClassifierSettings {
    /// Values beyond this while still growing count as divergent.
    pub cap: f64,
    /// Minimum per-step growth factor above the cap.
    pub growth: f64,
    /// Number of consecutive non-decreasing increments that signals divergence.
    pub flat_run: usize,
    pub max_levels_infinite: usize,
    pub max_levels_finite: usize,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        ClassifierSettings {
            cap: 1e9,
            growth: 1.1,
            flat_run: 6,
            max_levels_infinite: 60,
            max_levels_finite: 48,
        }
    }
}

/// Both probes for one edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryIntegrals {
    pub i1: Growth,
    pub i2: Growth,
}

impl BoundaryIntegrals {
    pub fn class(&self) -> BoundaryClass {
        match (self.i1.is_finite(), self.i2.is_finite()) {
            (true, true) => BoundaryClass::Regular,
            (true, false) => BoundaryClass::Exit,
            (false, true) => BoundaryClass::Entry,
            (false, false) => BoundaryClass::Natural,
        }
    }
}

/// Default probe base point.
pub fn default_base_point(length: f64) -> f64 {
    if length.is_finite() {
        0.5 * length
    } else {
        1.0
    }
}

#[derive(Default)]
struct Tracker {
    value: f64,
    ratios: Vec<f64>,
    last: f64,
    decided: Option<Growth>,
}

impl Tracker {
    fn push(&mut self, inc: f64, st: &ClassifierSettings) -> std::result::Result<(), String> {
        if self.decided.is_some() {
            return Ok(());
        }
        if inc == f64::INFINITY || self.value + inc == f64::INFINITY {
            self.decided = Some(Growth::Divergent);
            return Ok(());
        }
        if !inc.is_finite() || inc < -1e-9 * self.value.abs().max(1.0) {
            return Err(format!("increment {inc} after value {}", self.value));
        }
        let inc = inc.max(0.0);
        let prev = self.value;
        self.value += inc;
        if !self.ratios.is_empty() || self.last > 0.0 {
            let r = if self.last > 0.0 { inc / self.last } else if inc > 0.0 { f64::INFINITY } else { 0.0 };
            self.ratios.push(r);
        }
        self.last = inc;
        if self.value >= st.cap && prev > 0.0 && self.value >= st.growth * prev {
            self.decided = Some(Growth::Divergent);
            return Ok(());
        }
        let n = self.ratios.len();
        if n >= st.flat_run {
            let tail = &self.ratios[n - st.flat_run..];
            if inc > 0.0 && tail.iter().all(|&r| r >= 0.99) {
                self.decided = Some(Growth::Divergent);
            } else if tail.iter().all(|&r| r <= 0.75) {
                let r = tail.iter().cloned().fold(0.0, f64::max);
                let rest = if r > 0.0 { inc * r / (1.0 - r) } else { 0.0 };
                if rest <= 1e-10 * self.value.max(1.0) {
                    self.decided = Some(Growth::Finite(self.value + rest));
                }
            }
        }
        Ok(())
    }

    fn finish(&self) -> Option<Growth> {
        if self.decided.is_some() {
            return self.decided;
        }
        let n = self.ratios.len();
        if n >= 6 && self.ratios[n - 6..].iter().all(|&r| r <= 0.75) {
            let r = self.ratios[n - 6..].iter().cloned().fold(0.0, f64::max);
            return Some(Growth::Finite(self.value + self.last * r / (1.0 - r)));
        }
        None
    }
}

/// Probes `I1(x0, x)` and `I2(x0, x)` as `x` approaches `length`.
///
/// After Fubini, `I1 = ∫_(x0,x] (s(z) - s(x0)) m(dz)` and
/// `I2 = ∫_(x0,x] (s(x) - s(z)) m(dz)`; both are accumulated by increments
/// over the truncation sequence so no cancellation occurs.
pub fn boundary_integrals(
    edge: EdgeId,
    scale: &EdgeScale,
    speed: &EdgeMeasure,
    length: f64,
    x0: f64,
    st: &ClassifierSettings,
) -> Result<BoundaryIntegrals> {
    if !(x0 > 0.0 && x0 < length) {
        return Err(Error::Domain(format!("probe point {x0} outside (0, {length})")));
    }
    let s0 = scale.eval(x0);
    let stable = match (scale, &speed.density) {
        (EdgeScale::Cir(c), Some(Density::Cir(p))) if c.params == *p => Some(c),
        _ => None,
    };
    // (s(z) - s(x0)) times the density, guarded against inf * 0.
    let i1_density = |z: f64| -> f64 {
        match stable {
            Some(c) => {
                let p = c.params;
                let lead = c.ratio_to_deriv(z) - (s0.ln() - p.log_scale_density(z)).exp();
                lead / (p.sigma * p.sigma * (z + p.shift))
            }
            None => {
                let v = speed.density.as_ref().map_or(0.0, |d| d.value(z));
                if v == 0.0 {
                    0.0
                } else {
                    (scale.eval(z) - s0) * v
                }
            }
        }
    };
    // Non-density parts of m over (a, b] against g.
    let rest = |g: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64| -> Result<f64> {
        let mut total = 0.0;
        let iv = Interval::left_open(a, b);
        for at in &speed.atoms {
            if iv.contains(at.position) {
                total += g(at.position) * at.mass;
            }
        }
        if let Some(sing) = &speed.singular {
            total += sing.integrate(&g, a, b, tol)?;
        }
        Ok(total)
    };
    let mass_piece = |a: f64, b: f64, tol: f64| -> Result<f64> {
        let d = match &speed.density {
            Some(d) => integrate(|z| d.value(z), a, b, tol)?,
            None => 0.0,
        };
        Ok(d + rest(&|_| 1.0, a, b, tol)?)
    };

    let infinite = !length.is_finite();
    let levels = if infinite { st.max_levels_infinite } else { st.max_levels_finite };
    let point = |k: usize| -> f64 {
        if infinite {
            x0 * 2f64.powi(k as i32)
        } else {
            length - (length - x0) * 0.5f64.powi(k as i32)
        }
    };

    let mut t1 = Tracker::default();
    let mut t2 = Tracker::default();
    let mut mass = 0.0;
    let mut s_prev = s0;
    let mut a = x0;
    let inconclusive = |detail: String| Error::Inconclusive { edge: edge.index(), detail };
    for k in 1..=levels {
        let b = point(k);
        if !(b > a) || b >= length {
            break;
        }
        let sb = scale.eval(b);
        let tol1 = 1e-12 * t1.value.max(1.0);
        let tol2 = 1e-12 * t2.value.max(1.0);
        if t1.decided.is_none() {
            let inc = integrate(i1_density, a, b, tol1)
                .and_then(|d| Ok(d + rest(&|z| scale.eval(z) - s0, a, b, tol1)?));
            let inc = match inc {
                Ok(v) => v,
                Err(e) if sb == f64::INFINITY => {
                    let _ = e;
                    f64::INFINITY
                }
                Err(e) => return Err(inconclusive(format!("I1 quadrature: {e}"))),
            };
            t1.push(inc, st).map_err(|d| inconclusive(format!("I1: {d}")))?;
        }
        if t2.decided.is_none() {
            let inc = if sb == f64::INFINITY {
                f64::INFINITY
            } else {
                let d = match &speed.density {
                    Some(d) => integrate(|z| (sb - scale.eval(z)) * d.value(z), a, b, tol2),
                    None => Ok(0.0),
                };
                let d = d.map_err(|e| inconclusive(format!("I2 quadrature: {e}")))?;
                (sb - s_prev) * mass + d + rest(&|z| sb - scale.eval(z), a, b, tol2)?
            };
            t2.push(inc, st).map_err(|d| inconclusive(format!("I2: {d}")))?;
        }
        if t1.decided.is_some() && t2.decided.is_some() {
            break;
        }
        if t2.decided.is_none() {
            mass += mass_piece(a, b, 1e-12 * mass.max(1.0))
                .map_err(|e| inconclusive(format!("mass quadrature: {e}")))?;
        }
        s_prev = sb;
        a = b;
    }
    match (t1.finish(), t2.finish()) {
        (Some(i1), Some(i2)) => Ok(BoundaryIntegrals { i1, i2 }),
        (i1, i2) => Err(inconclusive(format!(
            "undecided after truncation: I1 {:?} ({}), I2 {:?} ({})",
            i1, t1.value, i2, t2.value
        ))),
    }
}
