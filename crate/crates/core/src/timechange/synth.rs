//! Streaming synthesis of a general diffusion from a Walsh walker.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{InverseGaussian, StandardNormal};

use super::clock::touch_local_time;
use super::{ClockModel, Kahan};
use crate::error::{domain, Result};
use crate::graph::GraphPoint;
use crate::measure::DiffusionSpec;
use crate::walsh::{flags, n_steps, Bias, Path, Seed, WalshWalker};

/// Discretisation parameters of the synthesis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthesisSettings {
    /// Output grid step (new clock).
    pub dt: f64,
    /// Step of the driving Walsh walker (its own clock).
    pub walsh_dt: f64,
    /// Local-time bandwidth.
    pub h: f64,
}

impl SynthesisSettings {
    /// Walsh step equal to the output step, bandwidth `sqrt(dt)`.
    pub fn new(dt: f64) -> Self {
        SynthesisSettings { dt, walsh_dt: dt, h: dt.sqrt() }
    }

    pub fn with_bandwidth(self, h: f64) -> Self {
        SynthesisSettings { h, ..self }
    }

    pub fn with_walsh_dt(self, walsh_dt: f64) -> Self {
        SynthesisSettings { walsh_dt, ..self }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("dt", self.dt), ("walsh dt", self.walsh_dt), ("bandwidth", self.h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One exit from a vertex-centred ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExitSample {
    /// Exit time on the diffusion clock.
    pub time: f64,
    pub edge: usize,
    /// Exit time on the driving Walsh clock.
    pub walsh_time: f64,
    /// Vertex local time `L^{0+}` at exit, summed from the sampled step values.
    pub vertex_local_time: f64,
    /// Time spent held at the vertex.
    pub vertex_occupation: f64,
    /// The walker ran past the time budget without exiting.
    pub truncated: bool,
}

/// Validated pipeline: push-forward, clock model and bias of `Y = s(X)`.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    spec: DiffusionSpec,
    clock: ClockModel,
    bias: Bias,
    settings: SynthesisSettings,
}

impl Synthesizer {
    /// Checks the standing assumption (only natural boundaries) and prepares
    /// the natural-scale data.
    pub fn new(spec: &DiffusionSpec, settings: SynthesisSettings) -> Result<Self> {
        settings.validate()?;
        if !spec.is_walsh() {
            spec.require_natural_boundaries()?;
        }
        let spec_y = spec.pushforward()?;
        let clock = ClockModel::new(&spec_y, settings.h)?;
        let bias = Bias::new(spec_y.bias())?;
        Ok(Synthesizer { spec: spec.clone(), clock, bias, settings })
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    /// The same pipeline emitting `Y = s(X)` instead of `X`.
    pub fn on_natural_scale(&self) -> Synthesizer {
        Synthesizer { spec: self.clock.spec().clone(), ..self.clone() }
    }

    pub fn spec_y(&self) -> &DiffusionSpec {
        self.clock.spec()
    }

    pub fn settings(&self) -> &SynthesisSettings {
        &self.settings
    }

    pub fn clock(&self) -> &ClockModel {
        &self.clock
    }

    fn start_y(&self, x0: GraphPoint) -> Result<GraphPoint> {
        if !self.spec.graph().contains(x0) {
            return Err(domain(format!("start point {x0} is not on the graph")));
        }
        Ok(self.spec.scale_eval(x0))
    }

    fn x_radius(&self, edge: usize, y: f64) -> f64 {
        self.spec.scale(crate::graph::EdgeId(edge)).inverse(y)
    }

    /// Synthesises `X_t = q(W_{γ(t)})` on `[0, horizon]` with output step `dt`.
    ///
    /// On a Walsh step that touches the vertex, the vertex local time of the
    /// step is drawn given its end points and the path is held at the vertex
    /// for `(rho / 2) L^{0+}`: the step's bridge is pinned at 0 at a hit time
    /// drawn from its conditional law, the hold sits there, then the bridge
    /// continues. Output points are read by Brownian-bridge
    /// interpolation; `dqv` records the Walsh time consumed per output step.
    pub fn path(&self, x0: GraphPoint, horizon: f64, seed: Seed) -> Result<Path> {
        let st = &self.settings;
        let n_out = n_steps(horizon, st.dt)?;
        let y0 = self.start_y(x0)?;
        let mut walker = WalshWalker::new(&self.bias, y0, st.walsh_dt, seed)?;
        let mut noise = seed.bridge().rng();
        let mut path = Path::with_capacity(st.dt, self.spec.n_edges(), n_out + 1);
        path.meta.seed = seed;
        path.meta.spec_hash = self.spec.hash();
        let mut gamma = Vec::with_capacity(n_out + 1);

        let mut clock = Kahan::default();
        let mut far_cells = HashMap::new();
        let mut k: u64 = 0;
        let mut i = 0usize;
        let mut pending_renewal = false;
        let sqrt_dt = st.walsh_dt.sqrt();
        while i <= n_out {
            let from_r = walker.radius;
            let motion = st.walsh_dt * self.clock.rate_cached(walker.edge, from_r, &mut far_cells);
            if !(motion > 0.0) {
                return Err(domain(format!("clock rate vanished at radius {from_r}")));
            }
            let step = walker.step();
            let (hold, theta_c) = if step.renewal && self.clock.rho() > 0.0 {
                let l0 = touch_local_time(from_r, step.radius, st.walsh_dt, 1.0 - noise.random::<f64>());
                (self.clock.vertex_hold(l0), hit_fraction(&mut noise, from_r, step.radius, st.walsh_dt))
            } else {
                (0.0, 1.0)
            };
            let a0 = clock.value();
            clock.add(hold + motion);
            let a1 = clock.value();
            // Scale by the span the compensated clock actually advanced, so no
            // sample before `a1` lands on the step's end point.
            let motion = if a1 - a0 - hold > 0.0 { a1 - a0 - hold } else { motion };
            let a_c = a0 + theta_c * motion;
            let a_h = a_c + hold;
            let t0 = k as f64 * st.walsh_dt;
            let end = (1.0, step.unfolded_end());
            let pinned = hold > 0.0;
            let pin = (theta_c, 0.0);
            let mut anchor = (0.0, from_r);
            let mut crossing_seen = false;
            loop {
                let u = i as f64 * st.dt;
                if i > n_out || u >= a1 {
                    break;
                }
                let carried = if pending_renewal { flags::RENEWAL } else { 0 };
                pending_renewal = false;
                if pinned && u >= a_c && u < a_h {
                    path.push(step.from_edge, 0.0, flags::HOLD | carried, None);
                    gamma.push(t0 + theta_c * st.walsh_dt);
                    anchor = pin;
                } else {
                    let before = u < a_c;
                    let theta = if before { (u - a0) / motion } else { theta_c + (u - a_h) / motion };
                    let theta = theta.clamp(0.0, 1.0);
                    let target = if before && pinned { pin } else { end };
                    if !before && pinned && anchor.0 < theta_c {
                        anchor = pin;
                    }
                    let z = bridge_sample(&mut noise, anchor, theta, target, sqrt_dt);
                    anchor = (theta, z);
                    let (edge, y) = if z >= 0.0 { (step.from_edge, z) } else { (step.edge, -z) };
                    let mut fl = carried;
                    if z < 0.0 && step.renewal && !crossing_seen {
                        fl |= flags::RENEWAL;
                        crossing_seen = true;
                    }
                    path.push(edge, self.x_radius(edge, y), fl, None);
                    gamma.push(t0 + theta * st.walsh_dt);
                }
                i += 1;
            }
            if step.renewal && !crossing_seen {
                pending_renewal = true;
            }
            k += 1;
        }
        path.dqv = Some(gamma.windows(2).map(|w| w[1] - w[0]).collect());
        Ok(path)
    }

    /// Streams the walker from `x0` until it leaves the ball of radius `delta`
    /// (in original coordinates), with bridge-corrected barrier crossings.
    pub fn exit(&self, x0: GraphPoint, delta: f64, seed: Seed, max_walsh_time: f64) -> Result<ExitSample> {
        let st = &self.settings;
        if !(delta > 0.0) || delta >= self.spec.graph().min_length() {
            return Err(domain(format!("ball radius {delta} must lie in (0, shortest edge)")));
        }
        let barriers: Vec<f64> = self
            .spec
            .graph()
            .edges()
            .map(|e| self.spec.scale(e).eval(delta))
            .collect();
        let y0 = self.start_y(x0)?;
        let mut walker = WalshWalker::new(&self.bias, y0, st.walsh_dt, seed)?;
        let mut noise = seed.bridge().rng();
        let dt = st.walsh_dt;
        let mut clock = Kahan::default();
        let mut far_cells = HashMap::new();
        let mut hold_total = Kahan::default();
        let mut lt = Kahan::default();
        let max_k = (max_walsh_time / dt).ceil() as u64;
        for k in 0..max_k {
            let r = walker.radius;
            if r >= barriers[walker.edge] {
                return Ok(ExitSample {
                    time: clock.value(),
                    edge: walker.edge,
                    walsh_time: k as f64 * dt,
                    vertex_local_time: lt.value(),
                    vertex_occupation: hold_total.value(),
                    truncated: false,
                });
            }
            let motion = dt * self.clock.rate_cached(walker.edge, r, &mut far_cells);
            let s = walker.step();
            let hold = if s.renewal {
                let l0 = touch_local_time(r, s.radius, dt, 1.0 - noise.random::<f64>());
                lt.add(l0);
                self.clock.vertex_hold(l0)
            } else {
                0.0
            };
            let crossed = if s.renewal {
                let b = barriers[s.edge];
                s.radius >= b || noise.random::<f64>() < (-2.0 * b * (b - s.radius) / dt).exp()
            } else {
                let b = barriers[s.from_edge];
                s.radius >= b || noise.random::<f64>() < (-2.0 * (b - r) * (b - s.radius) / dt).exp()
            };
            if crossed {
                let edge = if s.renewal { s.edge } else { s.from_edge };
                hold_total.add(hold);
                return Ok(ExitSample {
                    time: clock.value() + hold + 0.5 * motion,
                    edge,
                    walsh_time: (k as f64 + 0.5) * dt,
                    vertex_local_time: lt.value(),
                    vertex_occupation: hold_total.value(),
                    truncated: false,
                });
            }
            clock.add(hold + motion);
            hold_total.add(hold);
        }
        Ok(ExitSample {
            time: clock.value(),
            edge: walker.edge,
            walsh_time: max_k as f64 * dt,
            vertex_local_time: lt.value(),
            vertex_occupation: hold_total.value(),
            truncated: true,
        })
    }
}

/// Brownian bridge on the unfolded line from `anchor = (theta_a, z_a)` to
/// `target = (theta_b, z_b)`, sampled at `theta`.
fn bridge_sample(rng: &mut ChaCha8Rng, anchor: (f64, f64), theta: f64, target: (f64, f64), sqrt_dt: f64) -> f64 {
    let (ta, za) = anchor;
    let (tb, zb) = target;
    if theta <= ta {
        return za;
    }
    if theta >= tb {
        return zb;
    }
    let w = (theta - ta) / (tb - ta);
    let mean = za + w * (zb - za);
    let sd = sqrt_dt * ((theta - ta) * (tb - theta) / (tb - ta)).sqrt();
    let n: f64 = rng.sample(StandardNormal);
    mean + sd * n
}

/// Time of the first vertex hit, as a fraction of the step, for a bridge of
/// length `dt` from radius `a` through the vertex to radius `b`. With
/// `x = tau / (dt - tau)` the hit time density is inverse Gaussian with mean
/// `a / b` and shape `a^2 / dt`.
fn hit_fraction(rng: &mut ChaCha8Rng, a: f64, b: f64, dt: f64) -> f64 {
    if !(a > 0.0) {
        return 0.0;
    }
    if !(b > 0.0) {
        return 1.0;
    }
    match InverseGaussian::new(a / b, a * a / dt) {
        Ok(ig) => {
            let x: f64 = rng.sample(ig);
            if x.is_finite() { x / (1.0 + x) } else { 1.0 }
        }
        Err(_) => a / (a + b),
    }
}

/// One synthesised path; see [`Synthesizer::path`].
pub fn synthesize_diffusion(
    spec: &DiffusionSpec,
    x0: GraphPoint,
    horizon: f64,
    settings: &SynthesisSettings,
    seed: Seed,
) -> Result<Path> {
    Synthesizer::new(spec, *settings)?.path(x0, horizon, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeId, StarGraph};
    use crate::measure::{Density, EdgeMeasure, EdgeScale};
    use crate::walsh::simulate_walsh;

    #[test]
    fn touch_local_time_mean_from_vertex() {
        // From 0 every step touches; E L^{0+}_dt = 2 E|B_dt| = 2 sqrt(2 dt / pi).
        let dt: f64 = 0.01;
        let mut rng = Seed::new(7).rng();
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            acc += touch_local_time(0.0, (dt.sqrt() * z).abs(), dt, 1.0 - rng.random::<f64>());
        }
        let target = 2.0 * (2.0 * dt / std::f64::consts::PI).sqrt();
        assert!((acc / n as f64 / target - 1.0).abs() < 0.01, "{}", acc / n as f64);
    }

    #[test]
    fn hit_fraction_matches_density() {
        let (a, b, dt) = (0.07, 0.03, 0.01);
        // Midpoint rule on tau^{-3/2} (dt - tau)^{-1/2} exp(-a^2/2tau - b^2/2(dt - tau)).
        let m = 200_000;
        let (mut z, mut first) = (0.0, 0.0);
        for j in 0..m {
            let t = (j as f64 + 0.5) / m as f64 * dt;
            let w = t.powf(-1.5) * (dt - t).powf(-0.5) * (-a * a / (2.0 * t) - b * b / (2.0 * (dt - t))).exp();
            z += w;
            first += w * t / dt;
        }
        let mut rng = Seed::new(8).rng();
        let n = 200_000;
        let mean = (0..n).map(|_| hit_fraction(&mut rng, a, b, dt)).sum::<f64>() / n as f64;
        assert!((mean - first / z).abs() < 3e-3, "{mean} vs {}", first / z);
        assert_eq!(hit_fraction(&mut rng, 0.0, b, dt), 0.0);
    }

    #[test]
    fn walsh_spec_reproduces_walker_on_grid() {
        let spec = DiffusionSpec::walsh(&[0.5, 0.3, 0.2], 0.0).unwrap();
        let syn = Synthesizer::new(&spec, SynthesisSettings::new(1e-3)).unwrap();
        let p = syn.path(GraphPoint::Vertex, 0.5, Seed::new(1)).unwrap();
        let w = simulate_walsh(GraphPoint::Vertex, &Bias::new(&[0.5, 0.3, 0.2]).unwrap(), 0.5, 1e-3, Seed::new(1))
            .unwrap();
        assert_eq!(p.len(), w.len());
        let mut worst: f64 = 0.0;
        for k in 0..p.len() {
            worst = worst.max((p.radii[k] - w.radii[k]).abs());
        }
        assert!(worst < 1e-6, "{worst}");
        let q: f64 = p.dqv.as_ref().unwrap().iter().sum();
        assert!((q - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_natural_boundary() {
        let spec = DiffusionSpec::new(
            StarGraph::new(vec![1.0, 1.0]).unwrap(),
            vec![EdgeScale::Natural; 2],
            vec![EdgeMeasure::lebesgue(); 2],
            vec![0.5, 0.5],
            0.0,
        )
        .unwrap();
        let err = Synthesizer::new(&spec, SynthesisSettings::new(1e-3)).unwrap_err();
        assert!(err.to_string().contains("natural"), "{err}");
    }

    #[test]
    fn sticky_path_holds_at_vertex() {
        let spec = DiffusionSpec::walsh(&[0.5, 0.5], 1.0).unwrap();
        let p = synthesize_diffusion(&spec, GraphPoint::Vertex, 2.0, &SynthesisSettings::new(1e-3), Seed::new(3))
            .unwrap();
        assert_eq!(p.len(), 2001);
        assert!(p.vertex_occupation(p.n_steps()) > 0.0);
        let holds = p.flags.iter().filter(|&&f| f & flags::HOLD != 0).count();
        assert!(holds > 0);
        // Back-to-back holds share a release, or are split by motion shorter
        // than one output step.
        let (mut flat, mut pairs) = (0, 0);
        for k in 0..p.n_steps() {
            if p.flags[k] & flags::HOLD != 0 && p.flags[k + 1] & flags::HOLD != 0 {
                pairs += 1;
                flat += (p.dqv(k) == 0.0) as usize;
                assert!(p.dqv(k) < 1e-3);
                assert_eq!(p.radii[k], 0.0);
            }
        }
        assert!(flat * 10 > pairs * 9, "{flat}/{pairs}");
    }

    #[test]
    fn exit_of_slowed_motion_doubles() {
        let spec = DiffusionSpec::new(
            StarGraph::unbounded(2).unwrap(),
            vec![EdgeScale::Natural; 2],
            vec![EdgeMeasure::with_density(Density::Constant { value: 2.0 }); 2],
            vec![0.5, 0.5],
            0.0,
        )
        .unwrap();
        let syn = Synthesizer::new(&spec, SynthesisSettings::new(1e-3)).unwrap();
        let n = 4000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for i in 0..n {
            let e = syn.exit(GraphPoint::Vertex, 0.5, Seed::new(7).path(i), 100.0).unwrap();
            acc += e.time;
            acc2 += e.time * e.time;
        }
        let mean = acc / n as f64;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        // E T = 2 * delta^2 for m = 2 dx.
        assert!((mean - 0.5).abs() < 4.0 * se + 0.01, "{mean} ± {se}");
    }

    #[test]
    fn exit_from_edge_point_uses_scale() {
        let spec = DiffusionSpec::new(
            StarGraph::unbounded(1).unwrap(),
            vec![EdgeScale::linear(3.0).unwrap()],
            vec![EdgeMeasure::lebesgue()],
            vec![1.0],
            0.0,
        )
        .unwrap();
        let syn = Synthesizer::new(&spec, SynthesisSettings::new(1e-4)).unwrap();
        let e = syn.exit(GraphPoint::on(EdgeId(0), 2.0), 1.0, Seed::new(0), 1.0).unwrap();
        assert_eq!(e.time, 0.0);
    }
}
