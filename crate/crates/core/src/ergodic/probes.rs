//! Dynamical probes of the local stable and unstable manifolds around a
//! reference orbit `Y`.
//!
//! Both orbits are computed by the solver on the same driver, and
//! distances are weighted ℓ² distances of segment coordinates. The stable
//! probe perturbs along directions orthogonal to the pullback estimate of
//! the unstable subspace, which stands in for the stable fiber.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::lyapunov::{pullback_frame, unstable_subspace_pullback};
use super::{orthonormalize, random_frame, DelaySystem};
use crate::controlled::DelayedControlledSegment;
use crate::error::{Error, Result};
use crate::integrate::ols_slope;
use crate::linearize::SegmentBasis;
use crate::solve::{embed_initial, semiflow_driven, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    /// Forward decay of a perturbation along a stable direction.
    Stable,
    /// Backward decay along a past orbit seeded in the unstable direction.
    Unstable,
    /// Forward images of a perturbation orthogonal to the unstable
    /// direction at the pullback fiber.
    Orthogonal,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ProbeReport {
    pub mode: ProbeMode,
    /// Stable mode: slope of `ln d_k` against `k r`. Unstable modes: the
    /// same slope in backward time. `None` when the distances vanish.
    pub rate_fit: Option<f64>,
    /// `sup e^{υ m r} d_m` over forward (stable) or backward (unstable)
    /// segment counts `m`.
    pub sup_exp_nv: f64,
    pub upsilon: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub n: usize,
    /// Distance to the reference orbit at each fiber, in forward time.
    pub distances: Vec<f64>,
    /// Size of the perturbation actually applied.
    pub initial_offset: f64,
    /// `max_k d_k / d_0`.
    pub forward_growth: f64,
    /// Growth rate of the pullback direction, unstable modes only.
    pub growth_estimate: Option<f64>,
}

fn unit(basis: &SegmentBasis, v: DVector<f64>) -> Result<DVector<f64>> {
    let n = basis.norm(v.as_slice());
    if !(n > 0.0) {
        return Err(Error::Config("probe direction must be nonzero".into()));
    }
    Ok(v / n)
}

fn distances(basis: &SegmentBasis, a: &[DelayedControlledSegment], b: &[DelayedControlledSegment]) -> Result<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| basis.distance(x, y)).collect()
}

/// Slope of `ln d_k` against `k r` over `k ∈ [n/4, n]`.
fn rate(d: &[f64], delay: f64) -> Option<f64> {
    let n = d.len() - 1;
    let pts: Vec<(f64, f64)> =
        (n / 4..=n).filter(|&k| d[k] > 0.0).map(|k| (k as f64 * delay, d[k].ln())).collect();
    ols_slope(&pts)
}

fn growth(d: &[f64]) -> f64 {
    if d[0] > 0.0 {
        d.iter().fold(0.0, |a: f64, &v| a.max(v / d[0]))
    } else {
        0.0
    }
}

/// `count` unit directions at fiber 0, orthogonal to the `k0`-dimensional
/// pullback estimate of the unstable subspace.
pub fn stable_directions(
    sys: &DelaySystem,
    seed: u64,
    n_pullback: usize,
    k0: usize,
    count: usize,
) -> Result<Vec<DelayedControlledSegment>> {
    let basis = sys.basis();
    let dim = basis.dim();
    if k0 + count > dim {
        return Err(Error::Config("more directions requested than the basis holds".into()));
    }
    let unstable = unstable_subspace_pullback(sys, seed, n_pullback, k0, f64::INFINITY)?;
    let mut v = random_frame(dim, count, seed.wrapping_add(7));
    for u in &unstable.basis {
        let u = DVector::from_column_slice(u);
        for mut col in v.column_iter_mut() {
            let c = u.dot(&col);
            col.axpy(-c, &u, 1.0);
        }
    }
    let (q, _) = orthonormalize(v);
    let start = -(sys.steps as i64);
    q.column_iter()
        .map(|c| basis.decode(unit(&basis, c.into_owned())?.as_slice(), start))
        .collect()
}

/// Perturbs the reference segment `base` by `ε u` (`u` the unit-norm
/// version of `direction`) and follows both orbits for `n` segments.
pub fn stable_rate_probe(
    sys: &DelaySystem,
    seed: u64,
    base: &DelayedControlledSegment,
    direction: &DelayedControlledSegment,
    upsilon: f64,
    epsilon: f64,
    n: usize,
) -> Result<ProbeReport> {
    let basis = sys.basis();
    let base = embed_initial(base, &sys.vf)?.into_owned();
    let dir = embed_initial(direction, &sys.vf)?;
    if dir.start_node() != base.start_node() {
        return Err(Error::GridMismatch("direction and reference segment sit on different fibers".into()));
    }
    let u = unit(&basis, basis.encode(&dir)?)?;
    let moved = basis.encode(&base)? + u * epsilon;
    let moved = basis.decode(moved.as_slice(), base.start_node())?;
    let to = base.end_node() / sys.steps as i64 + n as i64;
    let (_, reference) = sys.orbit_of(seed, &base, to)?;
    let (_, perturbed) = sys.orbit_of(seed, &moved, to)?;
    let d = distances(&basis, &perturbed.segments, &reference.segments)?;
    let sup_exp_nv = d
        .iter()
        .enumerate()
        .map(|(k, v)| (upsilon * k as f64 * sys.delay).exp() * v)
        .fold(0.0, f64::max);
    Ok(ProbeReport {
        mode: ProbeMode::Stable,
        rate_fit: rate(&d, sys.delay),
        sup_exp_nv,
        upsilon,
        epsilon,
        seed,
        n,
        forward_growth: growth(&d),
        distances: d,
        initial_offset: epsilon,
        growth_estimate: None,
    })
}

/// Seeds a past orbit at fiber `−n`: the reference orbit starts at fiber
/// `−2n` from the system's initial segment, a unit direction is pulled
/// back to fiber `−n` and the perturbation (`ε e^{−μ̂ n r}` along it in
/// [`ProbeMode::Unstable`], `ε` orthogonal to it in
/// [`ProbeMode::Orthogonal`]) is pushed to fiber 0 by the solver.
pub fn unstable_rate_probe(
    sys: &DelaySystem,
    seed: u64,
    upsilon: f64,
    epsilon: f64,
    n: usize,
    mode: ProbeMode,
) -> Result<ProbeReport> {
    if mode == ProbeMode::Stable {
        return Err(Error::Config("use stable_rate_probe for the stable mode".into()));
    }
    if n < 4 {
        return Err(Error::Config("the unstable probe needs n ≥ 4".into()));
    }
    let basis = sys.basis();
    let (rp, reference) = sys.base_orbit(seed, -2 * n as i64, 0)?;
    let (frame, exps) = pullback_frame(sys, &rp, &reference, 0, n, 1, seed)?;
    let mu = exps[0];
    let pulled = DVector::from_column_slice(frame.column(0).as_slice());
    let (dir, offset) = match mode {
        ProbeMode::Unstable => (pulled, epsilon * (-mu * n as f64 * sys.delay).exp()),
        _ => {
            let mut v = DVector::from_column_slice(random_frame(basis.dim(), 1, seed.wrapping_add(11)).as_slice());
            let c = pulled.dot(&v);
            v.axpy(-c, &pulled, 1.0);
            (v, epsilon)
        }
    };
    let u = unit(&basis, dir)?;
    let start = &reference.segments[n];
    let moved = basis.encode(start)? + u * offset;
    let moved = basis.decode(moved.as_slice(), start.start_node())?;
    let Trajectory { segments } = semiflow_driven(&moved, &rp, &sys.vf, n)?;
    let d = distances(&basis, &segments, &reference.segments[n..])?;
    let sup_exp_nv = d
        .iter()
        .enumerate()
        .map(|(i, v)| (upsilon * (n - i) as f64 * sys.delay).exp() * v)
        .fold(0.0, f64::max);
    Ok(ProbeReport {
        mode,
        rate_fit: rate(&d, sys.delay).map(|s| -s),
        sup_exp_nv,
        upsilon,
        epsilon,
        seed,
        n,
        forward_growth: growth(&d),
        distances: d,
        initial_offset: offset,
        growth_estimate: Some(mu),
    })
}
