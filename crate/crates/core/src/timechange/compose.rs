//! Sticky composition: a non-sticky path slowed at the vertex.

use super::Kahan;
use crate::error::{domain, Result};
use crate::measure::DiffusionSpec;
use crate::walsh::{flags, Path};

/// Builds `A_ρ(t) = t + (ρ^Y / 2) L^{Y°,0}_t` from the vertex-cell local time
/// of `Y° = s(X°)`, inverts it and reads the base path on a uniform grid.
///
/// `spec` is the sticky target (its `rho` is used); `base` must come from the
/// same data with `rho = 0`. Within each base step the vertex hold comes first,
/// then the base point of that step is repeated for the rest of the step. The
/// output covers `[0, A_ρ(T))` with the base step.
pub fn sticky_compose(base: &Path, spec: &DiffusionSpec, h: f64) -> Result<Path> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(domain(format!("bandwidth must be positive, got {h}")));
    }
    if base.is_empty() {
        return Err(domain("empty base path"));
    }
    if spec.rho() == 0.0 {
        return Ok(base.clone());
    }
    let spec_y = spec.pushforward()?;
    let hold_rate = 0.5 * spec_y.rho() / h;
    let dt = base.dt;
    let qv = base.qv_clock();
    let mut a = Vec::with_capacity(base.len());
    let mut holds = Vec::with_capacity(base.n_steps());
    let mut acc = Kahan::default();
    a.push(0.0);
    for k in 0..base.n_steps() {
        let e = base.edges[k] as usize;
        let y = spec.scale(crate::graph::EdgeId(e)).eval(base.radii[k]);
        let hold = if y < h { hold_rate * base.dqv(k) } else { 0.0 };
        holds.push(hold);
        acc.add(hold + dt);
        a.push(acc.value());
    }
    let total = *a.last().expect("nonempty");
    let n_out = ((total / dt) * (1.0 - 1e-12)).floor() as usize;
    let mut out = Path::with_capacity(dt, base.n_edges, n_out + 1);
    out.meta = base.meta.clone();
    let mut gamma = Vec::with_capacity(n_out + 1);
    let mut k = 0usize;
    for i in 0..=n_out {
        let u = i as f64 * dt;
        while k + 1 < a.len() - 1 && a[k + 1] <= u {
            k += 1;
        }
        if u < a[k] + holds[k] {
            out.push(base.edges[k] as usize, 0.0, flags::HOLD, None);
            gamma.push(qv[k]);
        } else {
            let theta = ((u - a[k] - holds[k]) / dt).clamp(0.0, 1.0);
            let fl = base.flags[k] & flags::RENEWAL;
            out.push(base.edges[k] as usize, base.radii[k], fl, None);
            gamma.push(qv[k] + theta * (qv[k + 1] - qv[k]));
        }
    }
    out.dqv = Some(gamma.windows(2).map(|w| w[1] - w[0]).collect());
    Ok(out)
}
