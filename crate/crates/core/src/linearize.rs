//! The derivative cocycle: linearized delayed equation along a base
//! trajectory and its matrix on segment coordinates.
//!
//! For a base solution `y` with past `p` and a direction `q` on the past
//! segment, the derivative `Z` solves
//!
//! ```text
//! dZ = (σ̂_x(y_t, p_t) Z_t + σ̂_y(y_t, p_t) q_t) d𝐗_t,   Z_0 = q_N
//! ```
//!
//! and is stepped with the same one-step level-2 scheme as the solution.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::controlled::DelayedControlledSegment;
use crate::error::{Error, Result};
use crate::field::{JetScratch, VectorFieldBundle};
use crate::integrate::add_germ;
use crate::roughpath::DelayedRoughPath;
use crate::solve::{check_alignment, embed_initial, Trajectory};

/// Flat coordinates of a segment: all node values followed by all
/// Gubinelli coefficients (`ζ⁰` only), with inner product weighted by the
/// step `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentBasis {
    pub steps: usize,
    pub value_dim: usize,
    pub noise_dim: usize,
    pub step: f64,
}

impl SegmentBasis {
    pub fn new(steps: usize, value_dim: usize, noise_dim: usize, step: f64) -> Self {
        SegmentBasis { steps, value_dim, noise_dim, step }
    }

    /// Basis matching the segments of `vf` on a grid with `steps` per delay.
    pub fn for_field(vf: &VectorFieldBundle, steps: usize, step: f64) -> Self {
        SegmentBasis::new(steps, vf.state_dim(), vf.driver_dim(), step)
    }

    pub fn dim(&self) -> usize {
        (self.steps + 1) * self.value_dim * (1 + self.noise_dim)
    }

    fn value_len(&self) -> usize {
        (self.steps + 1) * self.value_dim
    }

    pub fn encode(&self, seg: &DelayedControlledSegment) -> Result<DVector<f64>> {
        if seg.steps() != self.steps || seg.value_dim() != self.value_dim || seg.noise_dim() != self.noise_dim {
            return Err(Error::Dimension("segment shape does not match the basis".into()));
        }
        if seg.is_delayed() {
            return Err(Error::WrongKind("basis coordinates cover plain controlled segments only".into()));
        }
        let mut v = DVector::zeros(self.dim());
        let n = self.value_len();
        v.as_mut_slice()[..n].copy_from_slice(seg.values());
        v.as_mut_slice()[n..].copy_from_slice(seg.zeta0_all());
        Ok(v)
    }

    pub fn decode(&self, coords: &[f64], start_node: i64) -> Result<DelayedControlledSegment> {
        if coords.len() != self.dim() {
            return Err(Error::Dimension(format!("expected {} coordinates, got {}", self.dim(), coords.len())));
        }
        let n = self.value_len();
        DelayedControlledSegment::new(
            start_node,
            self.step,
            self.value_dim,
            self.noise_dim,
            coords[..n].to_vec(),
            coords[n..].to_vec(),
            None,
        )
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.step * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// Weighted distance between two segments of this shape.
    pub fn distance(&self, a: &DelayedControlledSegment, b: &DelayedControlledSegment) -> Result<f64> {
        let d = self.encode(a)? - self.encode(b)?;
        Ok(self.norm(d.as_slice()))
    }
}

/// Derivative of the segment map at `past` in the direction `direction`.
///
/// `solution` is the segment the solver produced from `past`; all three
/// segments are expressed against the field's driver (see
/// [`embed_initial`]).
pub fn derivative_segment(
    past: &DelayedControlledSegment,
    solution: &DelayedControlledSegment,
    direction: &DelayedControlledSegment,
    rp: &DelayedRoughPath,
    vf: &VectorFieldBundle,
) -> Result<DelayedControlledSegment> {
    let driver = vf.driver(rp)?;
    let past = embed_initial(past, vf)?;
    let direction = embed_initial(direction, vf)?;
    let mut scratch = vf.scratch();
    derivative_advance(&past, solution, &direction, &driver, vf, &mut scratch)
}

pub(crate) fn derivative_advance(
    past: &DelayedControlledSegment,
    solution: &DelayedControlledSegment,
    direction: &DelayedControlledSegment,
    rp: &DelayedRoughPath,
    vf: &VectorFieldBundle,
    scratch: &mut JetScratch,
) -> Result<DelayedControlledSegment> {
    check_alignment(past, rp, vf)?;
    check_alignment(direction, rp, vf)?;
    if direction.start_node() != past.start_node()
        || solution.start_node() != past.end_node()
        || solution.steps() != past.steps()
        || solution.noise_dim() != past.noise_dim()
    {
        return Err(Error::GridMismatch("base segments and direction are not aligned".into()));
    }
    let n = rp.delay_steps();
    let w = vf.state_dim();
    let k = rp.dim();
    let ek = w * k;
    let start = solution.start_node();
    let mut values = Vec::with_capacity((n + 1) * w);
    let mut coeff = Vec::with_capacity((n + 1) * ek);
    let mut zp = vec![0.0; ek];
    let mut z0 = vec![0.0; ek * k];
    let mut z1 = vec![0.0; ek * k];
    let mut x = vec![0.0; k];
    let mut z = direction.last_value().to_vec();
    for j in 0..=n {
        values.extend_from_slice(&z);
        let order = if j == n { 1 } else { 2 };
        vf.eval_effective(solution.value(j), past.value(j), order, scratch);
        let jet = &scratch.jet;
        let q = direction.value(j);
        for e in 0..ek {
            let mut acc = 0.0;
            for b in 0..w {
                acc += jet.dx[e * w + b] * z[b] + jet.dy[e * w + b] * q[b];
            }
            zp[e] = acc;
        }
        coeff.extend_from_slice(&zp);
        if j == n {
            break;
        }
        let m = solution.zeta0(j);
        let pp = past.zeta0(j);
        let qp = direction.zeta0(j);
        z0.iter_mut().for_each(|c| *c = 0.0);
        z1.iter_mut().for_each(|c| *c = 0.0);
        for e in 0..ek {
            for b in 0..w {
                let (gx, gy) = (jet.dx[e * w + b], jet.dy[e * w + b]);
                for l in 0..k {
                    z0[e * k + l] += gx * zp[b * k + l];
                    z1[e * k + l] += gy * qp[b * k + l];
                }
                for c in 0..w {
                    let base = (e * w + b) * w + c;
                    // b is the x slot in dxx/dxy, c the y slot in dxy
                    let xx = jet.dxx[base] * z[b];
                    let xy_z = jet.dxy[base] * z[b];
                    let xy_q = jet.dxy[(e * w + c) * w + b] * q[b];
                    let yy = jet.dyy[base] * q[b];
                    if xx == 0.0 && xy_z == 0.0 && xy_q == 0.0 && yy == 0.0 {
                        continue;
                    }
                    for l in 0..k {
                        z0[e * k + l] += (xx + xy_q) * m[c * k + l];
                        z1[e * k + l] += (xy_z + yy) * pp[c * k + l];
                    }
                }
            }
        }
        let node = start + j as i64;
        rp.increment_into(node, node + 1, &mut x);
        add_germ(w, k, &zp, &z0, Some(&z1), &x, rp.interval_area(node), rp.interval_delayed_area(node), &mut z);
    }
    DelayedControlledSegment::new(start, rp.step(), w, k, values, coeff, None)
}

/// Matrix of the derivative map from segment `k − 1` to segment `k` of
/// `traj` in [`SegmentBasis`] coordinates.
pub fn cocycle_matrix(traj: &Trajectory, rp: &DelayedRoughPath, vf: &VectorFieldBundle, k: usize) -> Result<DMatrix<f64>> {
    let driver = vf.driver(rp)?;
    cocycle_matrix_driven(traj, &driver, vf, k)
}

pub(crate) fn cocycle_matrix_driven(
    traj: &Trajectory,
    driver: &DelayedRoughPath,
    vf: &VectorFieldBundle,
    k: usize,
) -> Result<DMatrix<f64>> {
    if k == 0 || k >= traj.segments.len() {
        return Err(Error::OutOfWindow(format!(
            "segment {k} has no predecessor in a trajectory of {} segments",
            traj.segments.len()
        )));
    }
    let past = &traj.segments[k - 1];
    let sol = &traj.segments[k];
    let basis = SegmentBasis::new(past.steps(), past.value_dim(), past.noise_dim(), past.step());
    let dim = basis.dim();
    let columns: Vec<Result<DVector<f64>>> = (0..dim)
        .into_par_iter()
        .map_init(
            || (vf.scratch(), vec![0.0; dim]),
            |(scratch, unit), i| {
                unit.iter_mut().for_each(|c| *c = 0.0);
                unit[i] = 1.0;
                let dir = basis.decode(unit, past.start_node())?;
                let out = derivative_advance(past, sol, &dir, driver, vf, scratch)?;
                basis.encode(&out)
            },
        )
        .collect();
    let mut mat = DMatrix::zeros(dim, dim);
    for (i, col) in columns.into_iter().enumerate() {
        mat.set_column(i, &col?);
    }
    Ok(mat)
}

/// Pushes `direction` (living on segment `from`) through the derivative
/// maps up to segment `to`.
pub fn push_direction(
    traj: &Trajectory,
    rp: &DelayedRoughPath,
    vf: &VectorFieldBundle,
    direction: &DelayedControlledSegment,
    from: usize,
    to: usize,
) -> Result<DelayedControlledSegment> {
    let driver = vf.driver(rp)?;
    let mut scratch = vf.scratch();
    let mut dir = Cow::Borrowed(direction);
    for k in from + 1..=to {
        let next = derivative_advance(&traj.segments[k - 1], &traj.segments[k], &dir, &driver, vf, &mut scratch)?;
        dir = Cow::Owned(next);
    }
    Ok(dir.into_owned())
}

/// Singular values of a cocycle matrix, largest first.
pub fn singular_value_profile(matrix: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = matrix.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Birkhoff averages of `log⁺‖ψ¹‖` and the scaled integrability proxy.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    /// `log⁺` of the operator norm of each one-segment matrix.
    pub log_norms: Vec<f64>,
    /// Running averages `(1/n) Σ_{k<n} log⁺‖ψ¹_{θᵏω}‖`.
    pub birkhoff: Vec<f64>,
    /// `P̃(A_n, ‖Y_n‖) / n` for `n = 1, 2, …`.
    pub proxy_over_n: Vec<f64>,
    /// Largest deviation from the final value over the last half.
    pub birkhoff_tail: f64,
    pub proxy_tail: f64,
    pub converged: bool,
}

/// Tolerance for the tails in [`GrowthReport`].
pub const GROWTH_TAIL_TOL: f64 = 0.05;

/// Builds the Birkhoff report from one-segment matrices and the proxy
/// values at the same segments.
pub fn growth_diagnostics(matrices: &[DMatrix<f64>], proxies: &[f64]) -> Result<GrowthReport> {
    if matrices.len() != proxies.len() || matrices.is_empty() {
        return Err(Error::Dimension("need one proxy value per matrix".into()));
    }
    let log_norms: Vec<f64> = matrices
        .iter()
        .map(|m| singular_value_profile(m).first().copied().unwrap_or(0.0).ln().max(0.0))
        .collect();
    let mut birkhoff = Vec::with_capacity(log_norms.len());
    let mut sum = 0.0;
    for (i, l) in log_norms.iter().enumerate() {
        sum += l;
        birkhoff.push(sum / (i + 1) as f64);
    }
    let proxy_over_n: Vec<f64> = proxies.iter().enumerate().map(|(i, p)| p / (i + 1) as f64).collect();
    let birkhoff_tail = cauchy_tail(&birkhoff);
    let proxy_tail = cauchy_tail(&proxy_over_n);
    Ok(GrowthReport {
        log_norms,
        birkhoff,
        proxy_over_n,
        birkhoff_tail,
        proxy_tail,
        converged: birkhoff_tail < GROWTH_TAIL_TOL && proxy_tail < GROWTH_TAIL_TOL,
    })
}

/// Largest `|s_i − s_last|` over the second half of `seq`.
pub(crate) fn cauchy_tail(seq: &[f64]) -> f64 {
    let Some(&last) = seq.last() else { return 0.0 };
    seq[seq.len() / 2..].iter().map(|v| (v - last).abs()).fold(0.0, f64::max)
}

/// Stand-in for the polynomial `P̃(A, ‖Y‖) = A² (1 + ‖Y‖)²` evaluated on
/// each solved segment, with `A = 1 + ‖𝐗‖_γ` over the segment's interval.
pub fn growth_proxy(traj: &Trajectory, rp: &DelayedRoughPath) -> Result<Vec<f64>> {
    let plain = if rp.is_time_augmented() { Cow::Owned(rp.strip_time()?) } else { Cow::Borrowed(rp) };
    traj.segments[1..]
        .iter()
        .map(|seg| {
            let a = 1.0 + plain.hoelder_norms(seg.start_node(), seg.end_node())?.total();
            Ok(a * a * (1.0 + seg.sup_norm()).powi(2))
        })
        .collect()
}

/// One-segment matrices along `traj` for segments `1..=n`.
pub fn cocycle_matrices(traj: &Trajectory, rp: &DelayedRoughPath, vf: &VectorFieldBundle) -> Result<Vec<DMatrix<f64>>> {
    let driver = vf.driver(rp)?;
    (1..traj.segments.len()).map(|k| cocycle_matrix_driven(traj, &driver, vf, k)).collect()
}
