//! Segment-wise one-step level-2 scheme for
//! `dy = σ̂(y_t, y_{t−r}) d𝐗_t` and the discrete semiflow.
//!
//! With drift, `σ̂ = (B + f, σ)` and `𝐗` is the time-augmented path; without
//! drift `σ̂ = σ`. On each coarse interval
//!
//! ```text
//! y_{j+1} = y_j + σ̂ X_j + σ̂_x σ̂ : 𝕏_j + σ̂_y p' : 𝕏(−r)_j
//! ```
//!
//! with every coefficient evaluated at `(y_j, p_j)`, `p` the past segment.

use std::borrow::Cow;
use std::fmt::Write as _;

use serde::Serialize;

use crate::controlled::DelayedControlledSegment;
use crate::error::{Error, Result};
use crate::field::{JetScratch, VectorFieldBundle};
use crate::integrate::add_germ;
use crate::roughpath::{norm, DelayedRoughPath};

/// Magnitude above which a solution is declared divergent.
pub const BLOW_UP: f64 = 1e12;

/// Initial segment plus `n` solved segments; `segments[0]` is the input.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<DelayedControlledSegment>,
}

impl Trajectory {
    pub fn last(&self) -> &DelayedControlledSegment {
        self.segments.last().expect("trajectory holds at least the initial segment")
    }

    /// Rows `segment, t, y…, y'…`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.segments.first() else { return out };
        let (w, k) = (first.value_dim(), first.noise_dim());
        out.push_str("segment,t");
        for a in 0..w {
            let _ = write!(out, ",y{a}");
        }
        for a in 0..w {
            for l in 0..k {
                let _ = write!(out, ",dy{a}_{l}");
            }
        }
        out.push('\n');
        for (s, seg) in self.segments.iter().enumerate() {
            for j in 0..=seg.steps() {
                let _ = write!(out, "{s},{:e}", seg.time(j));
                for x in seg.value(j).iter().chain(seg.zeta0(j)) {
                    let _ = write!(out, ",{x:e}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Brings an initial segment to the shape the solver needs: a segment
/// controlled by `X` alone gets a zero time column when the field has drift.
pub fn embed_initial<'a>(xi: &'a DelayedControlledSegment, vf: &VectorFieldBundle) -> Result<Cow<'a, DelayedControlledSegment>> {
    let w = vf.state_dim();
    let k = vf.driver_dim();
    if xi.value_dim() != w {
        return Err(Error::Dimension(format!("initial segment must be {w}-valued")));
    }
    if xi.noise_dim() == k {
        return Ok(Cow::Borrowed(xi));
    }
    if !(vf.has_drift() && xi.noise_dim() == vf.noise_dim()) {
        return Err(Error::Dimension(format!(
            "initial segment has {} coefficient columns, field needs {k}",
            xi.noise_dim()
        )));
    }
    let d = vf.noise_dim();
    let nodes = xi.steps() + 1;
    let mut zeta0 = vec![0.0; nodes * w * k];
    for j in 0..nodes {
        let src = xi.zeta0(j);
        for a in 0..w {
            for l in 0..d {
                zeta0[(j * w + a) * k + l + 1] = src[a * d + l];
            }
        }
    }
    Ok(Cow::Owned(DelayedControlledSegment::new(
        xi.start_node(),
        xi.step(),
        w,
        k,
        xi.values().to_vec(),
        zeta0,
        None,
    )?))
}

/// Solves one delay interval after `xi`.
pub fn solve_segment(xi: &DelayedControlledSegment, rp: &DelayedRoughPath, vf: &VectorFieldBundle) -> Result<DelayedControlledSegment> {
    let driver = vf.driver(rp)?;
    let past = embed_initial(xi, vf)?;
    let mut scratch = vf.scratch();
    advance(&past, &driver, vf, &mut scratch)
}

pub(crate) fn check_alignment(past: &DelayedControlledSegment, rp: &DelayedRoughPath, vf: &VectorFieldBundle) -> Result<()> {
    let n = rp.delay_steps();
    if past.steps() != n {
        return Err(Error::GridMismatch(format!(
            "segment has {} steps, the delay spans {n}",
            past.steps()
        )));
    }
    if (past.step() - rp.step()).abs() > 1e-12 * rp.step() {
        return Err(Error::GridMismatch("segment and rough path steps differ".into()));
    }
    if past.value_dim() != vf.state_dim() || past.noise_dim() != rp.dim() {
        return Err(Error::Dimension("segment shape does not match the field and driver".into()));
    }
    rp.check_nodes(past.end_node(), past.end_node() + n as i64)
}

/// One step of the scheme on `[start, start + N]` given the driver.
pub(crate) fn advance(
    past: &DelayedControlledSegment,
    rp: &DelayedRoughPath,
    vf: &VectorFieldBundle,
    scratch: &mut JetScratch,
) -> Result<DelayedControlledSegment> {
    check_alignment(past, rp, vf)?;
    let n = rp.delay_steps();
    let w = vf.state_dim();
    let k = rp.dim();
    let start = past.end_node();
    let mut values = Vec::with_capacity((n + 1) * w);
    let mut coeff = Vec::with_capacity((n + 1) * w * k);
    let mut z0 = vec![0.0; w * k * k];
    let mut z1 = vec![0.0; w * k * k];
    let mut x = vec![0.0; k];
    let mut y = past.last_value().to_vec();
    for j in 0..=n {
        values.extend_from_slice(&y);
        vf.eval_effective(&y, past.value(j), 1, scratch);
        let jet = &scratch.jet;
        coeff.extend_from_slice(&jet.value);
        if j == n {
            break;
        }
        let pp = past.zeta0(j);
        level2_coefficients(w, k, &jet.dx, &jet.dy, &jet.value, pp, &mut z0, &mut z1);
        let node = start + j as i64;
        rp.increment_into(node, node + 1, &mut x);
        add_germ(
            w,
            k,
            &jet.value,
            &z0,
            Some(&z1),
            &x,
            rp.interval_area(node),
            rp.interval_delayed_area(node),
            &mut y,
        );
        let size = norm(&y);
        if !(size <= BLOW_UP) {
            return Err(Error::Divergence { node: node + 1, time: rp.time(node + 1), magnitude: size });
        }
    }
    DelayedControlledSegment::new(start, rp.step(), w, k, values, coeff, None)
}

/// `ζ⁰ = g_x[u]`, `ζ¹ = g_y[v]` for first partials `g_x, g_y` of a
/// `w × k` field and `w × k` directions `u, v`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn level2_coefficients(
    w: usize,
    k: usize,
    dx: &[f64],
    dy: &[f64],
    u: &[f64],
    v: &[f64],
    z0: &mut [f64],
    z1: &mut [f64],
) {
    z0.iter_mut().for_each(|c| *c = 0.0);
    z1.iter_mut().for_each(|c| *c = 0.0);
    for e in 0..w * k {
        for b in 0..w {
            let gx = dx[e * w + b];
            let gy = dy[e * w + b];
            if gx != 0.0 {
                for l in 0..k {
                    z0[e * k + l] += gx * u[b * k + l];
                }
            }
            if gy != 0.0 {
                for l in 0..k {
                    z1[e * k + l] += gy * v[b * k + l];
                }
            }
        }
    }
}

/// `n` applications of the segment map starting from `xi`. Segment `k`
/// is driven by the rough path on `[kr, (k+1)r]` after the start of `xi`,
/// which is the `k`-fold Wiener shift of the driver seen on the grid.
pub fn semiflow(xi: &DelayedControlledSegment, rp: &DelayedRoughPath, vf: &VectorFieldBundle, n: usize) -> Result<Trajectory> {
    let driver = vf.driver(rp)?;
    semiflow_driven(xi, &driver, vf, n)
}

/// As [`semiflow`] for a rough path already matching the field's driver.
pub fn semiflow_driven(xi: &DelayedControlledSegment, driver: &DelayedRoughPath, vf: &VectorFieldBundle, n: usize) -> Result<Trajectory> {
    let first = embed_initial(xi, vf)?.into_owned();
    let mut scratch = vf.scratch();
    let mut segments = Vec::with_capacity(n + 1);
    segments.push(first);
    for _ in 0..n {
        let next = advance(segments.last().unwrap(), driver, vf, &mut scratch)?;
        segments.push(next);
    }
    Ok(Trajectory { segments })
}

/// Per-segment pair reported by [`solution_norm_diagnostic`].
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct NormDiagnostic {
    pub segment: usize,
    pub start_time: f64,
    /// Grid controlled-path norm of the solution segment.
    pub norm: f64,
    /// `1 + ‖𝐗‖_{γ}` on the segment's interval.
    pub a_value: f64,
}

/// `(‖y_k‖, A_k)` for every solved segment `k >= 1` of `traj`, so growth
/// of the norm in `A` and the initial norm can be inspected.
pub fn solution_norm_diagnostic(
    traj: &Trajectory,
    rp: &DelayedRoughPath,
    vf: &VectorFieldBundle,
    beta: f64,
) -> Result<Vec<NormDiagnostic>> {
    let driver = vf.driver(rp)?;
    let plain = if rp.is_time_augmented() { Cow::Owned(rp.strip_time()?) } else { Cow::Borrowed(rp) };
    traj.segments
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, seg)| {
            let hn = plain.hoelder_norms(seg.start_node(), seg.end_node())?;
            Ok(NormDiagnostic {
                segment: k,
                start_time: seg.time(0),
                norm: seg.norm_controlled(&driver, beta)?,
                a_value: 1.0 + hn.total(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{DiagonalField, LinearField, ScalarMap};
    use crate::noise::{sample_brownian, SamplePath};
    use crate::roughpath::{lift_ito, lift_stratonovich};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    const H: f64 = 1.0 / 16.0;

    fn brownian(d: usize, seed: u64, t_end: f64) -> DelayedRoughPath {
        let p = sample_brownian(d, -1.0, t_end, 1.0 / 256.0, seed).unwrap();
        lift_ito(&p, H, 1.0, 0.45).unwrap()
    }

    #[test]
    fn constant_sigma_telescopes() {
        let rp = brownian(2, 1, 3.0);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.2, 2.0]);
        let vf = VectorFieldBundle::new(Arc::new(LinearField::constant(s.clone())));
        let xi = DelayedControlledSegment::constant(-16, 16, H, &[0.3, -0.4], 2);
        let traj = semiflow(&xi, &rp, &vf, 3).unwrap();
        for seg in &traj.segments[1..] {
            for j in 0..=16 {
                let x = rp.increment(0, seg.start_node() + j as i64);
                let want = [0.3 + s[(0, 0)] * x[0] + s[(0, 1)] * x[1], -0.4 + s[(1, 0)] * x[0] + s[(1, 1)] * x[1]];
                assert!((seg.value(j)[0] - want[0]).abs() < 1e-12);
                assert!((seg.value(j)[1] - want[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn continuity_at_joins() {
        let rp = brownian(1, 2, 4.0);
        let vf = VectorFieldBundle::new(Arc::new(DiagonalField::scalar(ScalarMap::SineProduct { c: 0.8 })))
            .with_linear_drift(DMatrix::from_element(1, 1, -0.5), DMatrix::from_element(1, 1, 0.2))
            .unwrap();
        let xi = DelayedControlledSegment::constant(-16, 16, H, &[1.0], 1);
        let traj = semiflow(&xi, &rp, &vf, 4).unwrap();
        let mut s = vf.scratch();
        for pair in traj.segments.windows(2) {
            assert_eq!(pair[1].value(0), pair[0].last_value());
        }
        for pair in traj.segments[1..].windows(2) {
            vf.eval_effective(pair[1].value(0), pair[0].value(0), 0, &mut s);
            assert_eq!(pair[1].zeta0(0), &s.jet.value[..]);
            assert_eq!(pair[0].zeta0(16), pair[1].zeta0(0));
        }
    }

    #[test]
    fn zero_segments_returns_input() {
        let rp = brownian(1, 3, 2.0);
        let vf = VectorFieldBundle::new(Arc::new(LinearField::scalar(0.0, 1.0, 0.0)));
        let xi = DelayedControlledSegment::constant(-16, 16, H, &[1.0], 1);
        let traj = semiflow(&xi, &rp, &vf, 0).unwrap();
        assert_eq!(traj.segments, vec![xi]);
    }

    #[test]
    fn two_stage_equals_one_stage() {
        let rp = brownian(1, 4, 6.0);
        let vf = VectorFieldBundle::new(Arc::new(DiagonalField::scalar(ScalarMap::Polynomial(vec![
            (1, 0, 0.5),
            (0, 2, 0.3),
        ]))));
        let xi = DelayedControlledSegment::constant(-16, 16, H, &[0.2], 1);
        let one = semiflow(&xi, &rp, &vf, 5).unwrap();
        let first = semiflow(&xi, &rp, &vf, 2).unwrap();
        let second = semiflow(first.last(), &rp, &vf, 3).unwrap();
        assert_eq!(one.last(), second.last());
    }

    /// Method-of-steps closed form for `y' = a y(t−1)`, `y ≡ 1` on `[−1, 0]`.
    fn steps_solution(a: f64, t: f64) -> f64 {
        let mut y = 0.0;
        let mut k = 0;
        loop {
            let s = t - (k as f64 - 1.0);
            if s < 0.0 || k > 60 {
                break;
            }
            let mut term = 1.0;
            for i in 1..=k {
                term *= a * s / i as f64;
            }
            y += term;
            k += 1;
        }
        y
    }

    #[test]
    fn linear_delay_matches_method_of_steps() {
        let a = -0.3;
        let h = 1.0 / 256.0;
        let p = SamplePath::from_fn(1, -1.0, 5.0, h / 4.0, |_| vec![0.0]).unwrap();
        let rp = lift_ito(&p, h, 1.0, 0.45).unwrap();
        let vf = VectorFieldBundle::new(Arc::new(LinearField::scalar(0.0, 0.0, 0.0)))
            .with_linear_drift(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, a))
            .unwrap();
        let xi = DelayedControlledSegment::constant(-256, 256, h, &[1.0], 1);
        let traj = semiflow(&xi, &rp, &vf, 5).unwrap();
        let mut worst: f64 = 0.0;
        for seg in &traj.segments[1..] {
            for j in 0..=256 {
                worst = worst.max((seg.value(j)[0] - steps_solution(a, seg.time(j))).abs());
            }
        }
        assert!(worst < 1e-6, "max deviation {worst}");
        let sups: Vec<f64> = traj.segments[1..].iter().map(|s| s.sup_norm()).collect();
        assert!(sups.windows(2).all(|w| w[1] <= w[0]), "{sups:?}");
    }

    #[test]
    fn divergence_is_reported() {
        let p = SamplePath::from_fn(1, -1.0, 40.0, 1.0 / 64.0, |_| vec![0.0]).unwrap();
        let rp = lift_ito(&p, H, 1.0, 0.45).unwrap();
        let vf = VectorFieldBundle::new(Arc::new(LinearField::scalar(0.0, 0.0, 0.0)))
            .with_linear_drift(DMatrix::from_element(1, 1, 2.0), DMatrix::zeros(1, 1))
            .unwrap();
        let xi = DelayedControlledSegment::constant(-16, 16, H, &[1.0], 1);
        match semiflow(&xi, &rp, &vf, 40) {
            Err(Error::Divergence { node, magnitude, .. }) => {
                assert!(magnitude > BLOW_UP);
                assert!(node > 0);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn strat_and_ito_share_increment_term() {
        let p = sample_brownian(1, -1.0, 2.0, 1.0 / 256.0, 9).unwrap();
        let ito = lift_ito(&p, H, 1.0, 0.45).unwrap();
        let strat = lift_stratonovich(&p, H, 1.0, 0.45).unwrap();
        let vf = VectorFieldBundle::new(Arc::new(LinearField::scalar(0.0, 1.0, 0.0)));
        let xi = DelayedControlledSegment::constant(-16, 16, H, &[1.0], 1);
        let a = solve_segment(&xi, &ito, &vf).unwrap();
        let b = solve_segment(&xi, &strat, &vf).unwrap();
        // dy = y dB: the Stratonovich solution exceeds the Itô one by e^{t/2}
        let ratio = b.last_value()[0] / a.last_value()[0];
        assert!((ratio - 0.5f64.exp()).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn norm_diagnostic_is_finite() {
        let rp = brownian(1, 5, 3.0);
        for vf in [
            VectorFieldBundle::new(Arc::new(LinearField::scalar(1.0, 0.0, 0.0))),
            VectorFieldBundle::new(Arc::new(LinearField::scalar(0.0, 1.0, 0.0))),
            VectorFieldBundle::new(Arc::new(LinearField::scalar(0.0, 0.0, 0.0)))
                .with_linear_drift(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, -0.3))
                .unwrap(),
        ] {
            let xi = DelayedControlledSegment::constant(-16, 16, H, &[1.0], 1);
            let traj = semiflow(&xi, &rp, &vf, 3).unwrap();
            let diag = solution_norm_diagnostic(&traj, &rp, &vf, 0.4).unwrap();
            assert_eq!(diag.len(), 3);
            assert!(diag.iter().all(|d| d.norm.is_finite() && d.a_value >= 1.0));
        }
    }
}
