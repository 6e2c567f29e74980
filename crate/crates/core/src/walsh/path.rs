//! Discretised trajectories and their CSV / binary encodings.

use std::io::{BufRead, Read, Write};

use super::Seed;
use crate::error::{Error, Result};
use crate::graph::{EdgeId, GraphPoint};

/// Per-point flags.
pub mod flags {
    /// The step ending at this point touched the vertex; the label was redrawn.
    pub const RENEWAL: u8 = 1;
    /// The unreflected increment ending at this point went below zero.
    pub const REFLECTED: u8 = 2;
    /// The point is a sticky hold at the vertex.
    pub const HOLD: u8 = 4;
}

const MAGIC: &[u8; 4] = b"SPDR";
const VERSION: u32 = 1;

/// Provenance carried by every path.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PathMeta {
    /// Hex SHA-256 of the generating spec or config; empty when unknown.
    pub spec_hash: String,
    pub seed: Seed,
}

impl Default for Seed {
    fn default() -> Self {
        Seed::new(0)
    }
}

/// Trajectory on the grid `t_k = k dt`: edge labels `J_k`, radii `R_k`,
/// flags and optional quadratic-variation increments.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub dt: f64,
    pub n_edges: usize,
    pub edges: Vec<u32>,
    pub radii: Vec<f64>,
    pub flags: Vec<u8>,
    /// `dqv[k]` is the quadratic variation accrued on `[t_k, t_{k+1}]`;
    /// `None` means the clock is `t` itself (`dqv[k] = dt`).
    pub dqv: Option<Vec<f64>>,
    pub meta: PathMeta,
}

impl Path {
    pub fn with_capacity(dt: f64, n_edges: usize, cap: usize) -> Self {
        Path {
            dt,
            n_edges,
            edges: Vec::with_capacity(cap),
            radii: Vec::with_capacity(cap),
            flags: Vec::with_capacity(cap),
            dqv: None,
            meta: PathMeta::default(),
        }
    }

    pub fn push(&mut self, edge: usize, radius: f64, flag: u8, dqv: Option<f64>) {
        if let Some(q) = dqv {
            self.dqv.get_or_insert_with(Vec::new).push(q);
        }
        self.edges.push(edge as u32);
        self.radii.push(radius);
        self.flags.push(flag);
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn point(&self, k: usize) -> GraphPoint {
        GraphPoint::on(EdgeId(self.edges[k] as usize), self.radii[k])
    }

    pub fn points(&self) -> impl Iterator<Item = GraphPoint> + '_ {
        (0..self.len()).map(|k| self.point(k))
    }

    /// Quadratic-variation increment of step `k`.
    pub fn dqv(&self, k: usize) -> f64 {
        match &self.dqv {
            Some(v) => v[k],
            None => self.dt,
        }
    }

    /// Cumulative quadratic-variation clock on the grid, starting at 0.
    pub fn qv_clock(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 0..self.n_steps() {
            acc += self.dqv(k);
            out.push(acc);
        }
        out
    }

    /// First index whose radius is at least `delta`.
    pub fn first_exit(&self, delta: f64) -> Option<usize> {
        self.radii.iter().position(|&r| r >= delta)
    }

    /// `∫_0^{t_k} 1{X_s = v} ds` on the grid (left-point rule).
    pub fn vertex_occupation(&self, k: usize) -> f64 {
        self.radii[..k].iter().filter(|&&r| r == 0.0).count() as f64 * self.dt
    }

    fn check(&self) -> Result<()> {
        if let Some(q) = &self.dqv {
            if q.len() != self.n_steps() {
                return Err(Error::Frame(format!("{} QV increments for {} steps", q.len(), self.n_steps())));
            }
        }
        Ok(())
    }

    /// CSV with a `# config_hash=… seed=…` line and columns `t,edge,radius`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        self.check()?;
        writeln!(
            w,
            "# config_hash={} seed={} stream={} n_edges={}",
            self.meta.spec_hash, self.meta.seed.value, self.meta.seed.stream, self.n_edges
        )?;
        writeln!(w, "t,edge,radius")?;
        for k in 0..self.len() {
            writeln!(w, "{},{},{}", self.time(k), self.edges[k], self.radii[k])?;
        }
        Ok(())
    }

    /// Reads a CSV written by [`Path::write_csv`]. Flags and QV increments are not stored.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Path> {
        let mut meta = PathMeta::default();
        let mut n_edges = 0usize;
        let mut times = Vec::new();
        let mut path = Path::with_capacity(0.0, 0, 0);
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let bad = |what: &str| Error::Frame(format!("line {}: {what}", lineno + 1));
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.split_whitespace() {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad("malformed comment"))?;
                    match k {
                        "config_hash" => meta.spec_hash = v.to_string(),
                        "seed" => meta.seed.value = v.parse().map_err(|_| bad("seed"))?,
                        "stream" => meta.seed.stream = v.parse().map_err(|_| bad("stream"))?,
                        "n_edges" => n_edges = v.parse().map_err(|_| bad("n_edges"))?,
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with("t,") {
                continue;
            }
            let mut it = line.split(',');
            let mut field = |name: &str| it.next().ok_or_else(|| bad(name)).map(str::trim);
            let t: f64 = field("t")?.parse().map_err(|_| bad("t"))?;
            let e: usize = field("edge")?.parse().map_err(|_| bad("edge"))?;
            let r: f64 = field("radius")?.parse().map_err(|_| bad("radius"))?;
            times.push(t);
            path.push(e, r, 0, None);
        }
        if times.len() >= 2 {
            path.dt = times[1] - times[0];
        }
        path.n_edges = n_edges.max(path.edges.iter().map(|&e| e as usize + 1).max().unwrap_or(0));
        path.meta = meta;
        Ok(path)
    }

    /// Little-endian binary frame: header, then `(edge: u32, radius: f64)` records.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        self.check()?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.n_edges as u32).to_le_bytes())?;
        w.write_all(&self.meta.seed.value.to_le_bytes())?;
        w.write_all(&self.meta.seed.stream.to_le_bytes())?;
        w.write_all(&hash_bytes(&self.meta.spec_hash)?)?;
        for k in 0..self.len() {
            w.write_all(&self.edges[k].to_le_bytes())?;
            w.write_all(&self.radii[k].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Path> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Frame("bad magic".into()));
        }
        let version = u32::from_le_bytes(read_n(&mut r)?);
        if version != VERSION {
            return Err(Error::Frame(format!("unsupported version {version}")));
        }
        let dt = f64::from_le_bytes(read_n(&mut r)?);
        let n = u64::from_le_bytes(read_n(&mut r)?) as usize;
        let n_edges = u32::from_le_bytes(read_n(&mut r)?) as usize;
        let seed = u64::from_le_bytes(read_n(&mut r)?);
        let stream = u64::from_le_bytes(read_n(&mut r)?);
        let hash: [u8; 32] = read_n(&mut r)?;
        let mut path = Path::with_capacity(dt, n_edges, n);
        for _ in 0..n {
            let e = u32::from_le_bytes(read_n(&mut r)?);
            let x = f64::from_le_bytes(read_n(&mut r)?);
            path.push(e as usize, x, 0, None);
        }
        path.meta = PathMeta {
            spec_hash: if hash == [0; 32] { String::new() } else { crate::measure::hex(&hash) },
            seed: Seed { value: seed, stream },
        };
        Ok(path)
    }
}

fn read_n<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Frame(format!("truncated frame: {e}")))?;
    Ok(buf)
}

fn hash_bytes(hex: &str) -> Result<[u8; 32]> {
    let mut out = [0u8; 32];
    if hex.is_empty() {
        return Ok(out);
    }
    if hex.len() != 64 {
        return Err(Error::Frame(format!("hash must be 64 hex digits, got {}", hex.len())));
    }
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
            .map_err(|_| Error::Frame("hash is not hex".into()))?;
    }
    Ok(out)
}
