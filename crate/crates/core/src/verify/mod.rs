//! Monte Carlo and pathwise checks of the identities the simulator relies on.

mod mc;
mod pathwise;
mod suite;

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub use mc::{estimate_bias, exit_time_mc, two_sided_exit, ExitStats};
pub use pathwise::{
    check_directional_split, check_ito_tanaka, check_occupation_i, check_occupation_ii, check_strict_monotonicity,
    check_dds_roundtrip, DdsSettings, MonotonicityReport, ResidualReport, TanakaResidual, TestFunction,
};
pub use suite::{pathwise_settings, run_suite, Suite, SuiteSettings};

/// Default z-threshold for statistical checks.
pub const DEFAULT_Z: f64 = 3.0;

/// One check outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub n: usize,
    pub pass: bool,
    pub meta: BTreeMap<String, Value>,
}

impl McReport {
    /// Passes when `|estimate - target| <= z * stderr + tolerance`.
    pub fn new(name: impl Into<String>, estimate: f64, stderr: f64, target: f64, n: usize, z: f64, tolerance: f64) -> Self {
        let pass = (estimate - target).abs() <= z * stderr + tolerance;
        let mut meta = BTreeMap::new();
        meta.insert("z".into(), Value::from(z));
        meta.insert("tolerance".into(), Value::from(tolerance));
        McReport { name: name.into(), estimate, stderr, target, n, pass, meta }
    }

    /// A deterministic pass/fail outcome without a standard error.
    pub fn exact(name: impl Into<String>, estimate: f64, target: f64, n: usize, pass: bool) -> Self {
        McReport { name: name.into(), estimate, stderr: 0.0, target, n, pass, meta: BTreeMap::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Distance to the target in units of the standard error.
    pub fn z_score(&self) -> f64 {
        if self.stderr > 0.0 {
            (self.estimate - self.target) / self.stderr
        } else if self.estimate == self.target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Writes the reports as a JSON array.
pub fn write_reports<W: Write>(reports: &[McReport], mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, reports)?;
    writeln!(w)?;
    Ok(())
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Tail `P(K > λ)` of the Kolmogorov distribution.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test: statistic `D` and asymptotic p-value.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> (f64, f64) {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    (d, kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d))
}

/// True when every value is strictly below the previous one.
pub fn is_monotone_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
