//! Speed measures: density + atoms + singular-continuous part.

use serde::Serialize;

use super::quadrature::{integrate, DEFAULT_TOL};
use super::scale::{CirParams, EdgeScale};
use crate::error::{Error, Result};

/// Interval on an edge with explicit endpoint conventions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    /// `(lo, hi]`
    pub fn left_open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: false, hi_closed: true }
    }

    /// `(lo, hi)`
    pub fn open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: false, hi_closed: false }
    }

    /// `[lo, hi)`
    pub fn right_open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: true, hi_closed: false }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }
}

/// Absolutely continuous part of a speed measure.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Density {
    Constant { value: f64 },
    /// `coef * |offset + slope * y|^exponent`
    Power { coef: f64, offset: f64, slope: f64, exponent: f64 },
    Cir(CirParams),
    /// Piecewise-linear on `x`, constant past the last node.
    Tabulated { x: Vec<f64>, v: Vec<f64> },
}

impl Density {
    pub fn value(&self, y: f64) -> f64 {
        match self {
            Density::Constant { value } => *value,
            Density::Power { coef, offset, slope, exponent } => {
                coef * (offset + slope * y).abs().powf(*exponent)
            }
            Density::Cir(p) => p.speed_density(y),
            Density::Tabulated { x, v } => {
                if y <= x[0] {
                    return v[0];
                }
                if y >= x[x.len() - 1] {
                    return v[v.len() - 1];
                }
                let k = x.partition_point(|&t| t <= y) - 1;
                let w = (y - x[k]) / (x[k + 1] - x[k]);
                v[k] + w * (v[k + 1] - v[k])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = match self {
            Density::Constant { value } => !(*value >= 0.0 && value.is_finite()),
            Density::Power { coef, offset, slope, exponent } => {
                !(*coef >= 0.0) || ![offset, slope, exponent].iter().all(|v| v.is_finite())
            }
            Density::Cir(p) => return p.validate(),
            Density::Tabulated { x, v } => {
                x.is_empty()
                    || x.len() != v.len()
                    || x.windows(2).any(|w| !(w[1] > w[0]))
                    || v.iter().any(|d| !(*d >= 0.0 && d.is_finite()))
            }
        };
        if bad {
            Err(Error::InvalidSpec(format!("invalid density {self:?}")))
        } else {
            Ok(())
        }
    }

    /// Whether the density is strictly positive on the open interval `(0, l)`.
    fn positive_on(&self, l: f64) -> bool {
        match self {
            Density::Constant { value } => *value > 0.0,
            Density::Power { coef, offset, slope, .. } => {
                // The affine base must keep one sign on (0, l).
                let zero_inside = *slope != 0.0 && {
                    let z = -offset / slope;
                    z > 0.0 && z < l
                };
                *coef > 0.0 && !zero_inside && !(*slope == 0.0 && *offset == 0.0)
            }
            Density::Cir(_) => true,
            Density::Tabulated { x, v } => {
                // Linear interpolation: positive iff no zero node inside the edge,
                // except isolated zeros which still leave positive mass on every interval.
                !v.windows(2).zip(x.windows(2)).any(|(w, xs)| w[0] == 0.0 && w[1] == 0.0 && xs[0] < l)
                    && !(v[v.len() - 1] == 0.0 && x[x.len() - 1] < l)
            }
        }
    }
}

/// Continuous singular part given by a nondecreasing CDF.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SingularCdf {
    /// Cantor–Lebesgue function rescaled to `[lo, hi]` with total mass `mass`.
    Cantor { lo: f64, hi: f64, mass: f64 },
    /// Piecewise-linear CDF table; constant outside.
    Tabulated { x: Vec<f64>, cdf: Vec<f64> },
}

/// Cantor–Lebesgue function on `[0, 1]`.
pub fn cantor_function(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let mut x = x;
    let mut acc = 0.0;
    let mut p = 0.5;
    for _ in 0..64 {
        x *= 3.0;
        if x >= 2.0 {
            acc += p;
            x -= 2.0;
        } else if x >= 1.0 {
            return acc + p;
        }
        p *= 0.5;
    }
    acc
}

const CANTOR_DEPTH: u32 = 36;

impl SingularCdf {
    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            SingularCdf::Cantor { lo, hi, mass } => mass * cantor_function((y - lo) / (hi - lo)),
            SingularCdf::Tabulated { x, cdf } => {
                if y <= x[0] {
                    return cdf[0];
                }
                if y >= x[x.len() - 1] {
                    return cdf[cdf.len() - 1];
                }
                let k = x.partition_point(|&t| t <= y) - 1;
                let w = (y - x[k]) / (x[k + 1] - x[k]);
                cdf[k] + w * (cdf[k + 1] - cdf[k])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            SingularCdf::Cantor { lo, hi, mass } => {
                lo.is_finite() && hi.is_finite() && hi > lo && *lo >= 0.0 && *mass > 0.0 && mass.is_finite()
            }
            SingularCdf::Tabulated { x, cdf } => {
                x.len() >= 2
                    && x.len() == cdf.len()
                    && x.windows(2).all(|w| w[1] > w[0])
                    && cdf.windows(2).all(|w| w[1] >= w[0])
                    && cdf.iter().all(|c| c.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("invalid singular CDF {self:?}")))
        }
    }

    /// `∫_(a,b) g dF`; the measure has no atoms, so endpoint conventions do not matter.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: &G, a: f64, b: f64, tol: f64) -> Result<f64> {
        match self {
            SingularCdf::Cantor { lo, hi, mass } => {
                Ok(cantor_integrate(g, a, b, *lo, *hi, *mass, tol.max(1e-15), 0))
            }
            SingularCdf::Tabulated { x, cdf } => {
                let mut total = 0.0;
                for k in 0..x.len() - 1 {
                    let (c0, c1) = (x[k].max(a), x[k + 1].min(b));
                    if c1 <= c0 {
                        continue;
                    }
                    let slope = (cdf[k + 1] - cdf[k]) / (x[k + 1] - x[k]);
                    if slope > 0.0 {
                        total += slope * integrate(g, c0, c1, tol)?;
                    }
                }
                Ok(total)
            }
        }
    }
}

/// Self-similar recursion: the Cantor measure on `[lo, hi]` of mass `mass`
/// is two copies of half the mass on the outer thirds.
fn cantor_integrate<G: Fn(f64) -> f64>(
    g: &G,
    a: f64,
    b: f64,
    lo: f64,
    hi: f64,
    mass: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    if b <= lo || a >= hi {
        return 0.0;
    }
    let w = (hi - lo) / 3.0;
    let (l1, r1) = (lo, lo + w);
    let (l2, r2) = (hi - w, hi);
    if a <= lo && hi <= b {
        let whole = mass * g(0.5 * (lo + hi));
        let split = 0.5 * mass * (g(0.5 * (l1 + r1)) + g(0.5 * (l2 + r2)));
        if depth >= CANTOR_DEPTH || ((split - whole).abs() <= tol && depth >= 3) {
            return split;
        }
    } else if depth >= CANTOR_DEPTH {
        let f = |y: f64| cantor_function((y - lo) / (hi - lo));
        let part = f(b.min(hi)) - f(a.max(lo));
        return mass * part * g(0.5 * (a.max(lo) + b.min(hi)));
    }
    cantor_integrate(g, a, b, l1, r1, 0.5 * mass, 0.5 * tol, depth + 1)
        + cantor_integrate(g, a, b, l2, r2, 0.5 * mass, 0.5 * tol, depth + 1)
}

/// A point mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

/// Speed measure of one edge.
///
/// When `transport` is set the measure is the push-forward of the stored
/// parts through that scale function.
#[derive(Clone, Debug, PartialEq, Serialize, Default)]
pub struct EdgeMeasure {
    pub density: Option<Density>,
    pub atoms: Vec<Atom>,
    pub singular: Option<SingularCdf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport: Option<Box<EdgeScale>>,
}

impl EdgeMeasure {
    pub fn lebesgue() -> Self {
        Self::with_density(Density::Constant { value: 1.0 })
    }

    pub fn with_density(density: Density) -> Self {
        EdgeMeasure { density: Some(density), ..Default::default() }
    }

    pub fn cantor(lo: f64, hi: f64, mass: f64) -> Self {
        EdgeMeasure { singular: Some(SingularCdf::Cantor { lo, hi, mass }), ..Default::default() }
    }

    pub fn with_atom(mut self, position: f64, mass: f64) -> Self {
        self.atoms.push(Atom { position, mass });
        self.atoms.sort_by(|p, q| p.position.total_cmp(&q.position));
        self
    }

    pub fn with_singular(mut self, singular: SingularCdf) -> Self {
        self.singular = Some(singular);
        self
    }

    /// Checks nonnegativity and basic well-formedness.
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.density {
            d.validate()?;
        }
        if let Some(s) = &self.singular {
            s.validate()?;
        }
        for a in &self.atoms {
            if !(a.position > 0.0 && a.position.is_finite() && a.mass > 0.0 && a.mass.is_finite()) {
                return Err(Error::InvalidSpec(format!("invalid atom {a:?}")));
            }
        }
        Ok(())
    }

    /// Whether every nonempty open subinterval of `(0, l)` carries mass.
    ///
    /// Only a positive density guarantees this; atoms and singular parts alone
    /// leave gaps.
    pub fn has_full_support(&self, l: f64) -> bool {
        let l = match &self.transport {
            Some(s) => s.inverse(l),
            None => l,
        };
        self.density.as_ref().is_some_and(|d| d.positive_on(l))
    }

    /// Density of the absolutely continuous part at `y` (in this measure's
    /// own coordinate).
    pub fn density_at(&self, y: f64) -> f64 {
        match &self.transport {
            None => self.density.as_ref().map_or(0.0, |d| d.value(y)),
            Some(s) => {
                let x = s.inverse(y);
                self.density.as_ref().map_or(0.0, |d| d.value(x)) / s.deriv(x)
            }
        }
    }

    /// Atoms in this measure's own coordinate.
    pub fn atoms(&self) -> Vec<Atom> {
        match &self.transport {
            None => self.atoms.clone(),
            Some(s) => self
                .atoms
                .iter()
                .map(|a| Atom { position: s.eval(a.position), mass: a.mass })
                .collect(),
        }
    }

    pub fn has_singular(&self) -> bool {
        self.singular.is_some()
    }

    /// `∫_I g dm` with the default tolerance.
    pub fn integral<G: Fn(f64) -> f64>(&self, g: G, iv: Interval) -> Result<f64> {
        self.integral_tol(g, iv, DEFAULT_TOL)
    }

    /// `∫_I g dm` to absolute tolerance `tol` per part.
    pub fn integral_tol<G: Fn(f64) -> f64>(&self, g: G, iv: Interval, tol: f64) -> Result<f64> {
        if !(iv.lo <= iv.hi) || iv.lo < 0.0 {
            return Err(Error::Domain(format!("bad interval ({}, {})", iv.lo, iv.hi)));
        }
        match &self.transport {
            None => self.raw_integral(&g, iv, tol),
            Some(s) => {
                let mapped = Interval { lo: s.inverse(iv.lo), hi: s.inverse(iv.hi), ..iv };
                self.raw_integral(&|x: f64| g(s.eval(x)), mapped, tol)
            }
        }
    }

    /// `m(I)`.
    pub fn mass(&self, iv: Interval) -> Result<f64> {
        self.integral(|_| 1.0, iv)
    }

    fn raw_integral<G: Fn(f64) -> f64>(&self, g: &G, iv: Interval, tol: f64) -> Result<f64> {
        let mut total = 0.0;
        if iv.hi > iv.lo {
            if let Some(d) = &self.density {
                total += match d {
                    Density::Constant { value } if iv.hi.is_finite() => {
                        // Still integrate g, but skip the density evaluation.
                        if *value == 0.0 {
                            0.0
                        } else {
                            value * integrate(g, iv.lo, iv.hi, tol / value)?
                        }
                    }
                    _ => {
                        if !iv.hi.is_finite() {
                            return Err(Error::Domain("unbounded interval in measure integral".into()));
                        }
                        integrate(|y| g(y) * d.value(y), iv.lo, iv.hi, tol)?
                    }
                };
            }
            if let Some(sing) = &self.singular {
                total += sing.integrate(g, iv.lo, iv.hi.min(f64::MAX), tol)?;
            }
        }
        for a in &self.atoms {
            if iv.contains(a.position) {
                total += g(a.position) * a.mass;
            }
        }
        Ok(total)
    }

    /// The push-forward of this measure through `scale`.
    pub fn pushed_through(&self, scale: &EdgeScale) -> EdgeMeasure {
        if scale.is_natural() {
            return self.clone();
        }
        let transport = match &self.transport {
            None => scale.clone(),
            // Composition of transports is not needed by any caller.
            Some(_) => panic!("push-forward of an already transported measure"),
        };
        EdgeMeasure { transport: Some(Box::new(transport)), ..self.clone() }
    }
}
