//! Walsh Brownian motion: bias weights, the step kernel, path simulation and
//! local-time estimation.

mod local_time;
mod path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::graph::{EdgeId, GraphPoint};

pub use local_time::{local_time_field, LocalTimeField};
pub use path::{flags, Path, PathMeta};

/// Base seed plus a stream index; each path gets its own stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub value: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(value: u64) -> Self {
        Seed { value, stream: 0 }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        Seed { stream, ..self }
    }

    /// Seed for path `i` of a batch.
    pub fn path(self, i: u64) -> Self {
        self.with_stream(2 * i)
    }

    /// Companion stream of this seed, used for interpolation noise.
    pub fn bridge(self) -> Self {
        self.with_stream(self.stream ^ (1 << 63))
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.value);
        rng.set_stream(self.stream);
        rng
    }
}

/// Validated bias weights `beta_e`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bias {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Bias {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(domain("bias needs at least one edge"));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(domain(format!("bias weights must be positive, got {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(domain(format!("bias weights sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Bias { weights: weights.to_vec(), cumulative })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_edges(&self) -> usize {
        self.weights.len()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        if self.weights.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= u).min(self.weights.len() - 1)
    }
}

/// One step of the walker.
#[derive(Clone, Copy, Debug)]
pub struct Step {
    pub from_edge: usize,
    pub from_radius: f64,
    pub edge: usize,
    pub radius: f64,
    /// A zero hit happened inside the step; `edge` was redrawn.
    pub renewal: bool,
    /// The unreflected increment ended below zero.
    pub reflected: bool,
}

impl Step {
    /// Increment of the driving Brownian motion on the unfolded line.
    pub fn unfolded_increment(&self) -> f64 {
        if self.reflected {
            -(self.from_radius + self.radius)
        } else {
            self.radius - self.from_radius
        }
    }

    /// End point on the unfolded line seen from the starting edge.
    pub fn unfolded_end(&self) -> f64 {
        if self.renewal {
            -self.radius
        } else {
            self.radius
        }
    }
}

/// Exact reflected-Brownian radial step with bridge-sampled zero hits.
pub struct WalshWalker<'a> {
    bias: &'a Bias,
    rng: ChaCha8Rng,
    dt: f64,
    sqrt_dt: f64,
    pub edge: usize,
    pub radius: f64,
}

impl<'a> WalshWalker<'a> {
    pub fn new(bias: &'a Bias, start: GraphPoint, dt: f64, seed: Seed) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain(format!("time step must be positive, got {dt}")));
        }
        let mut rng = seed.rng();
        let (edge, radius) = match start {
            GraphPoint::Vertex => (bias.sample(&mut rng), 0.0),
            GraphPoint::Edge { edge, radius } => {
                if edge.index() >= bias.n_edges() || !(radius >= 0.0) || !radius.is_finite() {
                    return Err(domain(format!("invalid start point {start}")));
                }
                (edge.index(), radius)
            }
        };
        Ok(WalshWalker { bias, rng, dt, sqrt_dt: dt.sqrt(), edge, radius })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn point(&self) -> GraphPoint {
        GraphPoint::on(EdgeId(self.edge), self.radius)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn step(&mut self) -> Step {
        let r = self.radius;
        let z: f64 = self.rng.sample(StandardNormal);
        let x = r + self.sqrt_dt * z;
        let from_edge = self.edge;
        let (reflected, renewal) = if x <= 0.0 {
            (true, true)
        } else {
            // Probability that the unreflected bridge from r to x touched 0.
            let a = 2.0 * r * x / self.dt;
            let hit = a < 50.0 && self.rng.random::<f64>() < (-a).exp();
            (false, hit)
        };
        if renewal {
            self.edge = self.bias.sample(&mut self.rng);
        }
        self.radius = x.abs();
        Step { from_edge, from_radius: r, edge: self.edge, radius: self.radius, renewal, reflected }
    }
}

pub(crate) fn n_steps(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(domain(format!("time step must be positive, got {dt}")));
    }
    if !(horizon >= dt && horizon.is_finite()) {
        return Err(domain(format!("horizon {horizon} shorter than the step {dt}")));
    }
    Ok((horizon / dt - 1e-9).ceil() as usize)
}

/// Walsh Brownian motion on the unbounded star graph from `x0` up to `horizon`.
pub fn simulate_walsh(x0: GraphPoint, bias: &Bias, horizon: f64, dt: f64, seed: Seed) -> Result<Path> {
    let n = n_steps(horizon, dt)?;
    let mut walker = WalshWalker::new(bias, x0, dt, seed)?;
    let mut path = Path::with_capacity(dt, bias.n_edges(), n + 1);
    path.meta.seed = seed;
    path.push(walker.edge, walker.radius, 0, None);
    for _ in 0..n {
        let s = walker.step();
        let mut fl = 0;
        if s.renewal {
            fl |= flags::RENEWAL;
        }
        if s.reflected {
            fl |= flags::REFLECTED;
        }
        path.push(s.edge, s.radius, fl, None);
    }
    Ok(path)
}

/// Sticky Walsh Brownian motion with stickiness `rho`.
///
/// For `rho = 0` this is exactly [`simulate_walsh`]; otherwise a non-sticky
/// walker is time-changed by `t + (rho / 2) L^0_t` and read on a uniform grid.
pub fn simulate_sticky_walsh(
    x0: GraphPoint,
    bias: &Bias,
    rho: f64,
    horizon: f64,
    dt: f64,
    seed: Seed,
) -> Result<Path> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(domain(format!("stickiness must be >= 0, got {rho}")));
    }
    if rho == 0.0 {
        return simulate_walsh(x0, bias, horizon, dt, seed);
    }
    let spec = crate::measure::DiffusionSpec::walsh(bias.weights(), rho)?;
    let settings = crate::timechange::SynthesisSettings::new(dt);
    crate::timechange::synthesize_diffusion(&spec, x0, horizon, &settings, seed)
}
