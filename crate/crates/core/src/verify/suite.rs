use rayon::prelude::*;

use super::{
    check_dds_roundtrip, check_directional_split, check_occupation_i, check_occupation_ii, check_strict_monotonicity,
    estimate_bias, exit_time_mc, DdsSettings, McReport, DEFAULT_Z,
};
use crate::dirichlet::expected_exit_time;
use crate::error::Result;
use crate::graph::GraphPoint;
use crate::measure::DiffusionSpec;
use crate::timechange::{SynthesisSettings, Synthesizer};
use crate::walsh::{Path, Seed};

/// Size of a verification run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Smoke,
    Full,
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteSettings {
    pub dt: f64,
    pub n_paths: usize,
    pub horizon: f64,
    pub seed: Seed,
}

impl SuiteSettings {
    pub fn defaults(suite: Suite) -> Self {
        match suite {
            Suite::Smoke => SuiteSettings { dt: 1e-3, n_paths: 2_000, horizon: 1.0, seed: Seed::new(1) },
            Suite::Full => SuiteSettings { dt: 1e-3, n_paths: 10_000, horizon: 1.0, seed: Seed::new(1) },
        }
    }
}

/// Relative tolerance of aggregated occupation residuals.
const OCCUPATION_TOL: f64 = 0.05;

/// Walsh steps per output step for the pathwise checks.
pub const PATHWISE_REFINE: f64 = 16.0;

/// Settings for pathwise checks: the output grid is finer than the Walsh step
/// and `h = sqrt(walsh_dt)`. With `h = sqrt(dt)` on the output grid, cell
/// counts after a vertex hold overweight cell 0 by a constant fraction.
pub fn pathwise_settings(dt: f64) -> SynthesisSettings {
    let walsh_dt = PATHWISE_REFINE * dt;
    SynthesisSettings::new(dt).with_walsh_dt(walsh_dt).with_bandwidth(walsh_dt.sqrt())
}

/// Runs the checks that apply to `spec`. Pathwise identities are checked on
/// the natural-scale push-forward, exit laws on the spec itself.
pub fn run_suite(spec: &DiffusionSpec, suite: Suite, st: SuiteSettings) -> Result<Vec<McReport>> {
    let spec_y = spec.pushforward()?;
    let hash = spec.hash();
    let synth = SynthesisSettings::new(st.dt);
    let psynth = pathwise_settings(st.dt);
    let h = psynth.h;
    let b = (0.5 * spec.graph().min_length()).min(1.0);
    let mut out = Vec::new();

    out.extend(estimate_bias(spec, b, st.n_paths, st.dt, st.seed)?);

    let exact = expected_exit_time(spec, b)?.vertex_value;
    let ex = exit_time_mc(spec, GraphPoint::Vertex, b, st.n_paths, synth, st.seed.with_stream(1 << 40), f64::INFINITY)?;
    // Cell-count holds shorten the vertex time by a factor 1 - h/(2b).
    let tol = 0.02 * exact;
    out.push(
        McReport::new("exit_time_vs_solver", ex.mean_time, ex.stderr_time, exact, st.n_paths, DEFAULT_Z, tol)
            .with_meta("b", b)
            .with_meta("truncated", ex.truncated as u64),
    );

    let syn = Synthesizer::new(spec, psynth)?.on_natural_scale();
    let paths: Vec<Path> = (0..st.n_paths as u64)
        .into_par_iter()
        .map(|i| syn.path(GraphPoint::Vertex, st.horizon, st.seed.with_stream(1 << 41).path(i)))
        .collect::<Result<_>>()?;

    out.extend(check_directional_split(&paths, spec_y.bias(), h)?);

    let t = st.horizon;
    let agg = |name: &str, parts: Vec<(f64, f64)>| {
        let lhs: f64 = parts.iter().map(|p| p.0).sum();
        let rhs: f64 = parts.iter().map(|p| p.1).sum();
        let rel = if lhs == 0.0 { (rhs != 0.0) as u8 as f64 } else { ((lhs - rhs) / lhs).abs() };
        McReport::exact(name, rel, 0.0, parts.len(), rel <= OCCUPATION_TOL)
            .with_meta("lhs", lhs)
            .with_meta("rhs", rhs)
            .with_meta("tolerance", OCCUPATION_TOL)
            .with_meta("h", h)
    };
    let occ_i = paths
        .par_iter()
        .map(|p| check_occupation_i(p, |x| x.radius() * x.radius(), t, h).map(|r| (r.lhs, r.rhs)))
        .collect::<Result<Vec<_>>>()?;
    out.push(agg("occupation_i_r2", occ_i));
    let occ_ii = paths
        .par_iter()
        .map(|p| check_occupation_ii(p, &spec_y, |_| 1.0, t, h).map(|r| (r.lhs, r.rhs)))
        .collect::<Result<Vec<_>>>()?;
    out.push(agg("occupation_ii_one", occ_ii));
    if spec_y.rho() > 0.0 {
        let vert = paths
            .par_iter()
            .map(|p| {
                check_occupation_ii(p, &spec_y, |x| if x.is_vertex() { 1.0 } else { 0.0 }, t, h)
                    .map(|r| (r.lhs, r.rhs))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(agg("vertex_occupation", vert));
    }

    let mono: Vec<_> = paths.par_iter().map(check_strict_monotonicity).collect();
    let violations: usize = mono.iter().map(|r| r.violations).sum();
    let longest = mono.iter().map(|r| r.longest_flat).max().unwrap_or(0);
    out.push(
        McReport::exact("strict_monotonicity", violations as f64, 0.0, paths.len(), violations == 0)
            .with_meta("longest_flat", longest as u64),
    );

    if suite == Suite::Full {
        let dds = DdsSettings { synthesis: synth, horizon: st.horizon, clock_time: 0.5 * st.horizon };
        out.push(check_dds_roundtrip(spec, st.n_paths.max(10_000), dds, st.seed.with_stream(1 << 42))?);
    }

    for r in &mut out {
        r.meta.insert("spec_hash".into(), hash.clone().into());
        r.meta.insert("seed".into(), st.seed.value.into());
        r.meta.insert("dt".into(), st.dt.into());
        r.meta.entry("h".into()).or_insert(h.into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoke_suite_on_walsh() {
        let spec = DiffusionSpec::walsh(&[0.5, 0.3, 0.2], 0.0).unwrap();
        let st = SuiteSettings { n_paths: 1000, ..SuiteSettings::defaults(Suite::Smoke) };
        let r = run_suite(&spec, Suite::Smoke, st).unwrap();
        assert!(r.iter().all(|x| x.pass), "{r:#?}");
        assert!(r.iter().all(|x| x.meta.contains_key("spec_hash")));
    }
}
