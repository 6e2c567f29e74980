//! Cell-count estimates of local times.

use super::Path;
use crate::error::{domain, Result};

/// Local-time estimates `L^{e, y_j}_t` on cells `[j h, (j + 1) h)` at a list of times.
///
/// Directional values are stored; totals and the symmetric vertex value are
/// sums of the same numbers, so `L^v = sum_e L^{e,v}` holds exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTimeField {
    pub h: f64,
    pub times: Vec<f64>,
    pub n_edges: usize,
    pub n_cells: usize,
    data: Vec<f64>,
}

impl LocalTimeField {
    fn idx(&self, ti: usize, e: usize, j: usize) -> usize {
        (ti * self.n_edges + e) * self.n_cells + j
    }

    /// `L^{(e, y_j)}` at `times[ti]`.
    pub fn directional(&self, ti: usize, e: usize, j: usize) -> f64 {
        if j >= self.n_cells {
            return 0.0;
        }
        self.data[self.idx(ti, e, j)]
    }

    /// Cells of one edge at `times[ti]`.
    pub fn edge_cells(&self, ti: usize, e: usize) -> &[f64] {
        let a = self.idx(ti, e, 0);
        &self.data[a..a + self.n_cells]
    }

    /// Radial local time `L^{y_j}` summed over edges.
    pub fn total(&self, ti: usize, j: usize) -> f64 {
        (0..self.n_edges).map(|e| self.directional(ti, e, j)).sum()
    }

    /// Directional vertex local time `L^{e,v}`.
    pub fn vertex_directional(&self, ti: usize, e: usize) -> f64 {
        self.directional(ti, e, 0)
    }

    /// Symmetric vertex local time `L^v = L^{0+}`.
    pub fn vertex(&self, ti: usize) -> f64 {
        self.total(ti, 0)
    }

    /// Left end of cell `j`.
    pub fn cell_start(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    /// `sum_{e, j} L^{e, y_j} h`: the occupation measure of all cells.
    pub fn occupation(&self, ti: usize) -> f64 {
        let a = self.idx(ti, 0, 0);
        self.data[a..a + self.n_edges * self.n_cells].iter().sum::<f64>() * self.h
    }
}

/// Estimates `L^{y_j}_t ≈ (1/h) sum_k dQV_k 1{R_k in [y_j, y_j + h)}`, split
/// by the edge label, at every requested time (rounded down to the grid).
pub fn local_time_field(path: &Path, h: f64, times: &[f64]) -> Result<LocalTimeField> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(domain(format!("bandwidth must be positive, got {h}")));
    }
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        if !(t >= 0.0) || t > path.horizon() * (1.0 + 1e-12) {
            return Err(domain(format!("time {t} outside [0, {}]", path.horizon())));
        }
        let k = ((t / path.dt) * (1.0 + 1e-12)).floor() as usize;
        order.push((k.min(path.n_steps()), i));
    }
    let last = order.iter().map(|o| o.0).max().unwrap_or(0);
    let max_r = path.radii[..last.max(1).min(path.len())].iter().cloned().fold(0.0, f64::max);
    let n_cells = (max_r / h).floor() as usize + 1;
    let n_edges = path.n_edges.max(1);
    let mut field = LocalTimeField {
        h,
        times: times.to_vec(),
        n_edges,
        n_cells,
        data: vec![0.0; times.len() * n_edges * n_cells],
    };
    order.sort();
    let mut running = vec![0.0; n_edges * n_cells];
    let inv_h = 1.0 / h;
    let mut k = 0;
    for (stop, ti) in order {
        while k < stop {
            let j = (path.radii[k] * inv_h).floor() as usize;
            running[path.edges[k] as usize * n_cells + j] += path.dqv(k) * inv_h;
            k += 1;
        }
        let a = ti * n_edges * n_cells;
        field.data[a..a + n_edges * n_cells].copy_from_slice(&running);
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphPoint;
    use crate::walsh::{simulate_walsh, Bias, Seed};

    #[test]
    fn occupation_is_elapsed_time() {
        let b = Bias::new(&[0.5, 0.3, 0.2]).unwrap();
        let p = simulate_walsh(GraphPoint::Vertex, &b, 1.0, 1e-3, Seed::new(5)).unwrap();
        let f = local_time_field(&p, 0.03, &[0.25, 1.0, 0.5]).unwrap();
        assert!((f.occupation(0) - 0.25).abs() < 1e-9);
        assert!((f.occupation(1) - 1.0).abs() < 1e-9);
        assert!((f.occupation(2) - 0.5).abs() < 1e-9);
        // Nondecreasing in time and exact directional split.
        for e in 0..3 {
            for j in 0..f.n_cells {
                assert!(f.directional(0, e, j) <= f.directional(2, e, j));
                assert!(f.directional(2, e, j) <= f.directional(1, e, j));
            }
        }
        let split: f64 = (0..3).map(|e| f.vertex_directional(1, e)).sum();
        assert_eq!(split, f.vertex(1));
    }

    #[test]
    fn rejects_bad_bandwidth_and_time() {
        let b = Bias::new(&[1.0]).unwrap();
        let p = simulate_walsh(GraphPoint::Vertex, &b, 0.1, 1e-2, Seed::new(5)).unwrap();
        assert!(local_time_field(&p, 0.0, &[0.1]).is_err());
        assert!(local_time_field(&p, 0.1, &[0.2]).is_err());
    }
}
