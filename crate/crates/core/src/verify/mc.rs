use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{mean_stderr, McReport, DEFAULT_Z};
use crate::dirichlet::green_exit_moments;
use crate::error::{domain, Result};
use crate::graph::{EdgeId, GraphPoint};
use crate::measure::DiffusionSpec;
use crate::timechange::{ClockModel, ExitSample, SynthesisSettings, Synthesizer};
use crate::walsh::Seed;

/// Exit statistics from the ball of radius `delta`.
#[derive(Clone, Debug)]
pub struct ExitStats {
    pub n: usize,
    pub mean_time: f64,
    pub stderr_time: f64,
    pub edge_counts: Vec<usize>,
    pub mean_occupation: f64,
    pub stderr_occupation: f64,
    pub truncated: usize,
    pub samples: Vec<ExitSample>,
}

impl ExitStats {
    /// Exit-edge frequency and binomial standard error.
    pub fn frequency(&self, e: usize) -> (f64, f64) {
        let p = self.edge_counts[e] as f64 / self.n as f64;
        (p, (p * (1.0 - p) / self.n as f64).sqrt())
    }
}

/// Exit times and edges of `n` independent paths started at `x0`; path `i`
/// uses stream `seed.path(i)`, so results do not depend on the thread count.
pub fn exit_time_mc(
    spec: &DiffusionSpec,
    x0: GraphPoint,
    delta: f64,
    n: usize,
    settings: SynthesisSettings,
    seed: Seed,
    max_walsh_time: f64,
) -> Result<ExitStats> {
    if n == 0 {
        return Err(domain("need at least one path"));
    }
    let syn = Synthesizer::new(spec, settings)?;
    let samples: Vec<ExitSample> = (0..n as u64)
        .into_par_iter()
        .map(|i| syn.exit(x0, delta, seed.path(i), max_walsh_time))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    let occ: Vec<f64> = samples.iter().map(|s| s.vertex_occupation).collect();
    let (mean_time, stderr_time) = mean_stderr(&times);
    let (mean_occupation, stderr_occupation) = mean_stderr(&occ);
    let mut edge_counts = vec![0; spec.n_edges()];
    for s in &samples {
        edge_counts[s.edge] += 1;
    }
    let truncated = samples.iter().filter(|s| s.truncated).count();
    Ok(ExitStats { n, mean_time, stderr_time, edge_counts, mean_occupation, stderr_occupation, truncated, samples })
}

/// Exit-edge frequencies from the vertex at radius `b`, one report per edge.
/// Targets are the bias of the spec, or of its natural-scale push-forward
/// (which is also what gets simulated) when the spec is not in natural scale.
pub fn estimate_bias(spec: &DiffusionSpec, b: f64, n: usize, dt: f64, seed: Seed) -> Result<Vec<McReport>> {
    let target_spec = if spec.is_nse() { spec.clone() } else { spec.pushforward()? };
    let l_min = target_spec.graph().min_length();
    let b = if spec.is_nse() { b } else { spec.scale(EdgeId(0)).eval(b).min(0.5 * l_min) };
    let stats = exit_time_mc(&target_spec, GraphPoint::Vertex, b, n, SynthesisSettings::new(dt), seed, f64::INFINITY)?;
    let hash = spec.hash();
    Ok((0..spec.n_edges())
        .map(|e| {
            let (p, se) = stats.frequency(e);
            McReport::new(format!("exit_bias_e{e}"), p, se, target_spec.bias()[e], n, DEFAULT_Z, 0.0)
                .with_meta("b", b)
                .with_meta("dt", dt)
                .with_meta("seed", seed.value)
                .with_meta("spec_hash", hash.clone())
        })
        .collect())
}

/// Two-sided exit from `(a, b)` on one edge started at `x`, simulated in
/// natural scale with bridge-corrected crossings at both ends. Returns the
/// probability of leaving through `b` and the mean exit time, each against
/// the scale-function and Green-kernel targets.
#[allow(clippy::too_many_arguments)]
pub fn two_sided_exit(
    spec: &DiffusionSpec,
    e: EdgeId,
    a: f64,
    x: f64,
    b: f64,
    n: usize,
    dt: f64,
    seed: Seed,
) -> Result<[McReport; 2]> {
    let (p_target, t_target) = green_exit_moments(spec, e, a, x, b)?;
    if n == 0 || !(dt > 0.0) {
        return Err(domain("need paths and a positive step"));
    }
    let spec_y = spec.pushforward()?;
    let clock = ClockModel::new(&spec_y, dt.sqrt())?;
    let s = spec.scale(e);
    let (ya, y0, yb) = (s.eval(a), s.eval(x), s.eval(b));
    let sq = dt.sqrt();
    let runs: Vec<(bool, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.path(i).rng();
            let mut y = y0;
            let mut t = 0.0;
            loop {
                let motion = dt * clock.rate(e.index(), y);
                let z: f64 = rng.sample(StandardNormal);
                let y1 = y + sq * z;
                let hit_lo = y1 <= ya || rng.random::<f64>() < (-2.0 * (y - ya) * (y1 - ya) / dt).exp();
                if hit_lo {
                    return (false, t + 0.5 * motion);
                }
                let hit_hi = y1 >= yb || rng.random::<f64>() < (-2.0 * (yb - y) * (yb - y1) / dt).exp();
                if hit_hi {
                    return (true, t + 0.5 * motion);
                }
                t += motion;
                y = y1;
            }
        })
        .collect();
    let hits: Vec<f64> = runs.iter().map(|r| if r.0 { 1.0 } else { 0.0 }).collect();
    let times: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (p, _) = mean_stderr(&hits);
    let p_se = (p * (1.0 - p) / n as f64).sqrt();
    let (t, t_se) = mean_stderr(&times);
    let tag = |r: McReport| r.with_meta("dt", dt).with_meta("seed", seed.value).with_meta("spec_hash", spec.hash());
    Ok([
        tag(McReport::new("two_sided_exit_prob", p, p_se, p_target, n, DEFAULT_Z, 0.0)),
        tag(McReport::new("two_sided_exit_time", t, t_se, t_target, n, DEFAULT_Z, 0.0)),
    ])
}
