//! Delayed rough paths `(X, 𝕏, 𝕏(-r))` on a uniform coarse grid.
//!
//! Only adjacent-interval areas are stored. Areas over longer node pairs
//! are rebuilt on demand from the Chen relations
//!
//! ```text
//! 𝕏_{s,t}     = 𝕏_{s,u}     + 𝕏_{u,t}     + X_{s,u}     ⊗ X_{u,t}
//! 𝕏_{s,t}(-r) = 𝕏_{s,u}(-r) + 𝕏_{u,t}(-r) + X_{s-r,u-r} ⊗ X_{u,t}
//! ```
//!
//! Tensors are stored row-major with the integrand index first:
//! `𝕏^{ij}_{s,t} = ∫_s^t X^i_{s,u} dX^j_u`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{integer_ratio, SamplePath};

/// Stochastic integration convention used to build the areas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Ito,
    Stratonovich,
}

impl Convention {
    pub fn as_str(self) -> &'static str {
        match self {
            Convention::Ito => "ito",
            Convention::Stratonovich => "stratonovich",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ito" => Ok(Convention::Ito),
            "stratonovich" | "strat" => Ok(Convention::Stratonovich),
            other => Err(Error::Parse(format!("unknown convention `{other}`"))),
        }
    }
}

/// Per-interval integrals against time, needed to append `t ↦ t` as a
/// smooth component. Each vector is `n_intervals × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeCross {
    /// `∫_s^t (τ - s) dX_τ`
    pub time_dx: Vec<f64>,
    /// `∫_s^t X_{s,τ} dτ`
    pub x_dtime: Vec<f64>,
    /// `∫_s^t X_{s-r,τ-r} dτ`
    pub delayed_x_dtime: Vec<f64>,
}

/// Delayed γ-rough path on the grid `t_k = k h`.
///
/// Node values are stored from `first_node - delay_steps` to
/// `first_node + n_intervals` so that delayed increments `X_{s-r,t-r}` are
/// available on the whole lifted window.
#[derive(Clone, Debug)]
pub struct DelayedRoughPath {
    pub(crate) dim: usize,
    pub(crate) step: f64,
    pub(crate) first_node: i64,
    pub(crate) n_intervals: usize,
    pub(crate) delay_steps: usize,
    pub(crate) gamma: f64,
    pub(crate) convention: Convention,
    pub(crate) nodes: Vec<f64>,
    pub(crate) area: Vec<f64>,
    pub(crate) delayed_area: Vec<f64>,
    pub(crate) time_cross: Option<TimeCross>,
    pub(crate) time_augmented: bool,
    pub(crate) source: Option<Arc<SamplePath>>,
}

impl PartialEq for DelayedRoughPath {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.step.to_bits() == other.step.to_bits()
            && self.first_node == other.first_node
            && self.n_intervals == other.n_intervals
            && self.delay_steps == other.delay_steps
            && self.gamma.to_bits() == other.gamma.to_bits()
            && self.convention == other.convention
            && bits_eq(&self.nodes, &other.nodes)
            && bits_eq(&self.area, &other.area)
            && bits_eq(&self.delayed_area, &other.delayed_area)
            && match (&self.time_cross, &other.time_cross) {
                (Some(a), Some(b)) => {
                    bits_eq(&a.time_dx, &b.time_dx)
                        && bits_eq(&a.x_dtime, &b.x_dtime)
                        && bits_eq(&a.delayed_x_dtime, &b.delayed_x_dtime)
                }
                (None, None) => true,
                _ => false,
            }
            && self.time_augmented == other.time_augmented
    }
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Checks `1/3 < α < β < γ < 1/2` together with
/// `(1-α)(1/2-β) / ((1-β)(1-2α)) < β - α`.
pub fn validate_exponents(alpha: f64, beta: f64, gamma: f64) -> bool {
    let ordered = 1.0 / 3.0 < alpha && alpha < beta && beta < gamma && gamma < 0.5;
    ordered && exponent_condition_lhs(alpha, beta) < beta - alpha
}

/// Left-hand side of the (α, β) compatibility condition.
pub fn exponent_condition_lhs(alpha: f64, beta: f64) -> f64 {
    (1.0 - alpha) * (0.5 - beta) / ((1.0 - beta) * (1.0 - 2.0 * alpha))
}

/// Itô lift: areas are left-point Riemann sums over the fine grid inside
/// each coarse interval. The coarse window is `[t_start + r, t_end]`.
pub fn lift_ito(path: &SamplePath, h: f64, r: f64, gamma: f64) -> Result<DelayedRoughPath> {
    lift(path, h, r, gamma, Convention::Ito)
}

/// Stratonovich lift: the Itô area plus `½ (t - s) I_d`; the delayed area
/// is the Itô one.
pub fn lift_stratonovich(path: &SamplePath, h: f64, r: f64, gamma: f64) -> Result<DelayedRoughPath> {
    lift(path, h, r, gamma, Convention::Stratonovich)
}

pub fn lift(path: &SamplePath, h: f64, r: f64, gamma: f64, convention: Convention) -> Result<DelayedRoughPath> {
    if !(gamma > 1.0 / 3.0 && gamma < 0.5) {
        return Err(Error::Config(format!("gamma = {gamma} must lie in (1/3, 1/2)")));
    }
    let h_f = path.fine_step();
    let refine = integer_ratio(h, h_f)
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::GridMismatch(format!("coarse step {h} is not a multiple of fine step {h_f}")))?
        as usize;
    let delay_steps = integer_ratio(r, h)
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::GridMismatch(format!("delay {r} is not a positive multiple of coarse step {h}")))?
        as usize;
    let fine_intervals = path.n_nodes() - 1;
    if fine_intervals % refine != 0 {
        return Err(Error::GridMismatch(format!(
            "sample window [{}, {}] is not a multiple of coarse step {h}",
            path.t_start(),
            path.t_end()
        )));
    }
    let coarse = fine_intervals / refine;
    if coarse <= delay_steps {
        return Err(Error::OutOfWindow(format!(
            "sample window of {coarse} coarse steps does not cover the delay plus one step"
        )));
    }
    let start_node = integer_ratio(path.t_start(), h).ok_or_else(|| {
        Error::GridMismatch(format!("window start {} is not a multiple of coarse step {h}", path.t_start()))
    })?;

    let d = path.dim();
    let n = coarse - delay_steps;
    let mut nodes = Vec::with_capacity((coarse + 1) * d);
    for i in 0..=coarse {
        for c in 0..d {
            nodes.push(path.increment(0, i * refine, c));
        }
    }

    let mut area = vec![0.0; n * d * d];
    let mut delayed_area = vec![0.0; n * d * d];
    let mut time_dx = vec![0.0; n * d];
    let mut x_dtime = vec![0.0; n * d];
    let mut delayed_x_dtime = vec![0.0; n * d];
    let lag = delay_steps * refine;
    let mut inc = vec![0.0; d];
    let mut run = vec![0.0; d];
    let mut run_del = vec![0.0; d];
    for k in 0..n {
        let f0 = (delay_steps + k) * refine;
        let a = &mut area[k * d * d..(k + 1) * d * d];
        let da = &mut delayed_area[k * d * d..(k + 1) * d * d];
        for l in 0..refine {
            let u = f0 + l;
            for c in 0..d {
                inc[c] = path.increment(u, u + 1, c);
                run[c] = path.increment(f0, u, c);
                run_del[c] = path.increment(f0 - lag, u - lag, c);
            }
            for i in 0..d {
                for j in 0..d {
                    a[i * d + j] += run[i] * inc[j];
                    da[i * d + j] += run_del[i] * inc[j];
                }
                time_dx[k * d + i] += l as f64 * h_f * inc[i];
                x_dtime[k * d + i] += run[i] * h_f;
                delayed_x_dtime[k * d + i] += run_del[i] * h_f;
            }
        }
        if convention == Convention::Stratonovich {
            for i in 0..d {
                a[i * d + i] += 0.5 * h;
            }
        }
    }

    Ok(DelayedRoughPath {
        dim: d,
        step: h,
        first_node: start_node + delay_steps as i64,
        n_intervals: n,
        delay_steps,
        gamma,
        convention,
        nodes,
        area,
        delayed_area,
        time_cross: Some(TimeCross { time_dx, x_dtime, delayed_x_dtime }),
        time_augmented: false,
        source: Some(Arc::new(path.clone())),
    })
}

/// Grid-supremum estimates of the four terms of `‖𝐗‖_{γ;[a,b]}`.
///
/// These are lower bounds of the analytic Hölder norms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct HoelderNorms {
    /// `‖X‖_{γ;[a,b]}`
    pub path: f64,
    /// `‖X‖_{γ;[a-r,b-r]}`
    pub delayed_path: f64,
    /// `‖𝕏‖_{2γ;[a,b]}`
    pub area: f64,
    /// `‖𝕏(-r)‖_{2γ;[a,b]}`
    pub delayed_area: f64,
}

impl HoelderNorms {
    pub fn total(&self) -> f64 {
        self.path + self.delayed_path + self.area.sqrt() + self.delayed_area.sqrt()
    }
}

impl DelayedRoughPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn delay(&self) -> f64 {
        self.delay_steps as f64 * self.step
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    /// First node of the lifted window (areas exist from here on).
    pub fn first_node(&self) -> i64 {
        self.first_node
    }

    /// Last node of the lifted window.
    pub fn last_node(&self) -> i64 {
        self.first_node + self.n_intervals as i64
    }

    pub fn time(&self, node: i64) -> f64 {
        node as f64 * self.step
    }

    /// Node index of time `t`, if it lies on the grid.
    pub fn node_of(&self, t: f64) -> Option<i64> {
        integer_ratio(t, self.step)
    }

    pub fn is_time_augmented(&self) -> bool {
        self.time_augmented
    }

    pub fn has_time_cross(&self) -> bool {
        self.time_cross.is_some()
    }

    /// The fine-grid path this lift was built from, if still attached.
    pub fn source(&self) -> Option<&SamplePath> {
        self.source.as_deref()
    }

    /// Stored adjacent-interval area for the interval starting at `node`.
    pub fn interval_area(&self, node: i64) -> &[f64] {
        let k = self.interval_index(node);
        let dd = self.dim * self.dim;
        &self.area[k * dd..(k + 1) * dd]
    }

    /// Stored adjacent-interval delayed area for the interval starting at `node`.
    pub fn interval_delayed_area(&self, node: i64) -> &[f64] {
        let k = self.interval_index(node);
        let dd = self.dim * self.dim;
        &self.delayed_area[k * dd..(k + 1) * dd]
    }

    fn interval_index(&self, node: i64) -> usize {
        let k = node - self.first_node;
        assert!(
            k >= 0 && (k as usize) < self.n_intervals,
            "interval at node {node} outside lifted window [{}, {})",
            self.first_node,
            self.last_node()
        );
        k as usize
    }

    #[inline]
    fn node_slot(&self, node: i64) -> usize {
        let k = node - (self.first_node - self.delay_steps as i64);
        debug_assert!(k >= 0 && k as usize <= self.n_intervals + self.delay_steps);
        k as usize
    }

    /// Component `c` of `X_{s,t}`; nodes may reach `delay_steps` before the
    /// lifted window.
    #[inline]
    pub fn increment_component(&self, s: i64, t: i64, c: usize) -> f64 {
        let (a, b) = (self.node_slot(s), self.node_slot(t));
        self.nodes[b * self.dim + c] - self.nodes[a * self.dim + c]
    }

    pub fn increment(&self, s: i64, t: i64) -> Vec<f64> {
        (0..self.dim).map(|c| self.increment_component(s, t, c)).collect()
    }

    pub(crate) fn increment_into(&self, s: i64, t: i64, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.increment_component(s, t, c);
        }
    }

    /// Checks that `[s, t]` lies inside the lifted window.
    pub fn check_nodes(&self, s: i64, t: i64) -> Result<()> {
        if s > t || s < self.first_node || t > self.last_node() {
            return Err(Error::OutOfWindow(format!(
                "node range [{s}, {t}] outside lifted window [{}, {}]",
                self.first_node,
                self.last_node()
            )));
        }
        Ok(())
    }

    /// `𝕏_{s,t}` for grid nodes `s <= t`, rebuilt with Chen.
    pub fn area(&self, s: i64, t: i64) -> Vec<f64> {
        self.chen(s, t, false)
    }

    /// `𝕏_{s,t}(-r)` for grid nodes `s <= t`, rebuilt with delayed Chen.
    pub fn delayed_area(&self, s: i64, t: i64) -> Vec<f64> {
        self.chen(s, t, true)
    }

    fn chen(&self, s: i64, t: i64, delayed: bool) -> Vec<f64> {
        assert!(s <= t, "areas are defined for s <= t (got {s} > {t})");
        let d = self.dim;
        let lag = if delayed { self.delay_steps as i64 } else { 0 };
        let mut out = vec![0.0; d * d];
        let mut acc = vec![0.0; d];
        let mut inc = vec![0.0; d];
        for k in s..t {
            let stored = if delayed { self.interval_delayed_area(k) } else { self.interval_area(k) };
            self.increment_into(k, k + 1, &mut inc);
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] += stored[i * d + j] + acc[i] * inc[j];
                }
            }
            for (c, a) in acc.iter_mut().enumerate() {
                *a += self.increment_component(k - lag, k + 1 - lag, c);
            }
        }
        out
    }

    /// Grid-supremum Hölder estimates on the node range `[a, b]`.
    /// An empty range gives zeros.
    pub fn hoelder_norms(&self, a: i64, b: i64) -> Result<HoelderNorms> {
        if b <= a {
            return Ok(HoelderNorms::default());
        }
        self.check_nodes(a, b)?;
        let d = self.dim;
        let lag = self.delay_steps as i64;
        let mut out = HoelderNorms::default();
        let mut area = vec![0.0; d * d];
        let mut darea = vec![0.0; d * d];
        let mut acc = vec![0.0; d];
        let mut dacc = vec![0.0; d];
        let mut inc = vec![0.0; d];
        for s in a..b {
            area.iter_mut().for_each(|v| *v = 0.0);
            darea.iter_mut().for_each(|v| *v = 0.0);
            acc.iter_mut().for_each(|v| *v = 0.0);
            dacc.iter_mut().for_each(|v| *v = 0.0);
            for k in s..b {
                let stored = self.interval_area(k);
                let dstored = self.interval_delayed_area(k);
                self.increment_into(k, k + 1, &mut inc);
                for i in 0..d {
                    for j in 0..d {
                        area[i * d + j] += stored[i * d + j] + acc[i] * inc[j];
                        darea[i * d + j] += dstored[i * d + j] + dacc[i] * inc[j];
                    }
                }
                for c in 0..d {
                    acc[c] += inc[c];
                    dacc[c] += self.increment_component(k - lag, k + 1 - lag, c);
                }
                let dt = (k + 1 - s) as f64 * self.step;
                let g = dt.powf(self.gamma);
                let g2 = g * g;
                out.path = out.path.max(norm(&acc) / g);
                out.delayed_path = out.delayed_path.max(norm(&dacc) / g);
                out.area = out.area.max(norm(&area) / g2);
                out.delayed_area = out.delayed_area.max(norm(&darea) / g2);
            }
        }
        Ok(out)
    }

    /// Grid estimate of `‖𝐗‖_{γ;[a,b]}` for times `a <= b`.
    pub fn hoelder_norm(&self, a: f64, b: f64) -> Result<f64> {
        let (s, t) = self.nodes_of_interval(a, b)?;
        Ok(self.hoelder_norms(s, t)?.total())
    }

    pub(crate) fn nodes_of_interval(&self, a: f64, b: f64) -> Result<(i64, i64)> {
        let s = self
            .node_of(a)
            .ok_or_else(|| Error::GridMismatch(format!("{a} is not a grid node (step {})", self.step)))?;
        let t = self
            .node_of(b)
            .ok_or_else(|| Error::GridMismatch(format!("{b} is not a grid node (step {})", self.step)))?;
        Ok((s, t))
    }

    /// Appends `t ↦ t` as component 0.
    ///
    /// Cross areas come from the fine sums recorded at lift time; the
    /// time-time entries of both areas are `(t-s)²/2`.
    pub fn augment_time(&self) -> Result<DelayedRoughPath> {
        if self.time_augmented {
            return Err(Error::Config("rough path is already time-augmented".into()));
        }
        let tc = self.time_cross.as_ref().ok_or_else(|| {
            Error::MissingFineData("time cross integrals were not recorded for this rough path".into())
        })?;
        let d = self.dim;
        let e = d + 1;
        let total_nodes = self.n_intervals + self.delay_steps + 1;
        let mut nodes = Vec::with_capacity(total_nodes * e);
        for i in 0..total_nodes {
            nodes.push(i as f64 * self.step);
            nodes.extend_from_slice(&self.nodes[i * d..(i + 1) * d]);
        }
        let half_sq = 0.5 * self.step * self.step;
        let mut area = vec![0.0; self.n_intervals * e * e];
        let mut delayed_area = vec![0.0; self.n_intervals * e * e];
        for k in 0..self.n_intervals {
            let a = &mut area[k * e * e..(k + 1) * e * e];
            let da = &mut delayed_area[k * e * e..(k + 1) * e * e];
            a[0] = half_sq;
            da[0] = half_sq;
            for j in 0..d {
                a[j + 1] = tc.time_dx[k * d + j];
                da[j + 1] = tc.time_dx[k * d + j];
                a[(j + 1) * e] = tc.x_dtime[k * d + j];
                da[(j + 1) * e] = tc.delayed_x_dtime[k * d + j];
                for i in 0..d {
                    a[(i + 1) * e + j + 1] = self.area[k * d * d + i * d + j];
                    da[(i + 1) * e + j + 1] = self.delayed_area[k * d * d + i * d + j];
                }
            }
        }
        Ok(DelayedRoughPath {
            dim: e,
            nodes,
            area,
            delayed_area,
            time_augmented: true,
            ..self.clone()
        })
    }

    /// Inverse of [`augment_time`](Self::augment_time).
    pub fn strip_time(&self) -> Result<DelayedRoughPath> {
        if !self.time_augmented {
            return Err(Error::Config("rough path is not time-augmented".into()));
        }
        let e = self.dim;
        let d = e - 1;
        let total_nodes = self.n_intervals + self.delay_steps + 1;
        let mut nodes = Vec::with_capacity(total_nodes * d);
        for i in 0..total_nodes {
            nodes.extend_from_slice(&self.nodes[i * e + 1..(i + 1) * e]);
        }
        let strip = |src: &[f64]| {
            let mut out = Vec::with_capacity(self.n_intervals * d * d);
            for k in 0..self.n_intervals {
                for i in 0..d {
                    for j in 0..d {
                        out.push(src[k * e * e + (i + 1) * e + j + 1]);
                    }
                }
            }
            out
        };
        Ok(DelayedRoughPath {
            dim: d,
            nodes,
            area: strip(&self.area),
            delayed_area: strip(&self.delayed_area),
            time_augmented: false,
            ..self.clone()
        })
    }

    /// Largest Chen residual over the given `(s, u, t)` node triples, for
    /// both the plain and the delayed identity.
    pub fn chen_residual(&self, triples: &[(i64, i64, i64)]) -> f64 {
        let d = self.dim;
        let lag = self.delay_steps as i64;
        let mut worst: f64 = 0.0;
        for &(s, u, t) in triples {
            let full = self.area(s, t);
            let left = self.area(s, u);
            let right = self.area(u, t);
            let dfull = self.delayed_area(s, t);
            let dleft = self.delayed_area(s, u);
            let dright = self.delayed_area(u, t);
            let x_su = self.increment(s, u);
            let x_ut = self.increment(u, t);
            let xd_su = self.increment(s - lag, u - lag);
            for i in 0..d {
                for j in 0..d {
                    let idx = i * d + j;
                    let r0 = full[idx] - left[idx] - right[idx] - x_su[i] * x_ut[j];
                    let r1 = dfull[idx] - dleft[idx] - dright[idx] - xd_su[i] * x_ut[j];
                    worst = worst.max(r0.abs()).max(r1.abs());
                }
            }
        }
        worst
    }

    /// Builds a rough path directly from stored data (used by file I/O).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        dim: usize,
        step: f64,
        first_node: i64,
        n_intervals: usize,
        delay_steps: usize,
        gamma: f64,
        convention: Convention,
        nodes: Vec<f64>,
        area: Vec<f64>,
        delayed_area: Vec<f64>,
        time_cross: Option<TimeCross>,
        time_augmented: bool,
    ) -> Result<Self> {
        let node_count = n_intervals + delay_steps + 1;
        if nodes.len() != node_count * dim
            || area.len() != n_intervals * dim * dim
            || delayed_area.len() != n_intervals * dim * dim
        {
            return Err(Error::Parse("rough path arrays do not match header sizes".into()));
        }
        let base = if time_augmented { dim - 1 } else { dim };
        if let Some(tc) = &time_cross {
            let want = n_intervals * base;
            if tc.time_dx.len() != want || tc.x_dtime.len() != want || tc.delayed_x_dtime.len() != want {
                return Err(Error::Parse("time cross arrays do not match header sizes".into()));
            }
        }
        Ok(DelayedRoughPath {
            dim,
            step,
            first_node,
            n_intervals,
            delay_steps,
            gamma,
            convention,
            nodes,
            area,
            delayed_area,
            time_cross,
            time_augmented,
            source: None,
        })
    }

    pub(crate) fn first_stored_node(&self) -> i64 {
        self.first_node - self.delay_steps as i64
    }
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_brownian;

    fn linear_path(h_f: f64) -> SamplePath {
        SamplePath::from_fn(1, -1.0, 2.0, h_f, |t| vec![t]).unwrap()
    }

    #[test]
    fn deterministic_area_is_half_square() {
        let h_f = 1.0 / 1024.0;
        let h = 1.0 / 8.0;
        let rp = lift_ito(&linear_path(h_f), h, 1.0, 0.45).unwrap();
        for (s, t) in [(0, 1), (0, 8), (3, 16)] {
            let dt = (t - s) as f64 * h;
            let exact = 0.5 * dt * dt;
            // the left-point sum is short of the integral by dt * h_f / 2
            assert!((rp.area(s, t)[0] - exact).abs() <= dt * h_f, "area({s},{t})");
            assert!((rp.delayed_area(s, t)[0] - exact).abs() <= dt * h_f);
        }
    }

    #[test]
    fn chen_holds_for_brownian_lift() {
        let p = sample_brownian(3, 0.0, 3.0, 1.0 / 256.0, 4).unwrap();
        let rp = lift_ito(&p, 1.0 / 16.0, 1.0, 0.45).unwrap();
        let triples = [(16, 20, 40), (16, 17, 18), (30, 31, 48), (17, 33, 47)];
        assert!(rp.chen_residual(&triples) < 1e-12);
    }

    #[test]
    fn strat_minus_ito_is_half_identity() {
        let p = sample_brownian(2, 0.0, 2.0, 1.0 / 128.0, 8).unwrap();
        let h = 1.0 / 16.0;
        let ito = lift_ito(&p, h, 0.5, 0.45).unwrap();
        let strat = lift_stratonovich(&p, h, 0.5, 0.45).unwrap();
        for (s, t) in [(8, 9), (8, 20), (11, 32)] {
            let a = ito.area(s, t);
            let b = strat.area(s, t);
            let half = 0.5 * (t - s) as f64 * h;
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { half } else { 0.0 };
                    assert!((b[i * 2 + j] - a[i * 2 + j] - want).abs() < 1e-13);
                }
            }
            assert_eq!(ito.delayed_area(s, t), strat.delayed_area(s, t));
            assert_eq!(ito.increment(s, t), strat.increment(s, t));
        }
    }

    #[test]
    fn delay_must_be_commensurate() {
        let p = sample_brownian(1, 0.0, 2.0, 1.0 / 64.0, 1).unwrap();
        assert!(matches!(lift_ito(&p, 0.125, 0.3, 0.45), Err(Error::GridMismatch(_))));
        assert!(matches!(lift_ito(&p, 0.1, 0.5, 0.45), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn hoelder_of_zero_path_is_zero() {
        let p = SamplePath::from_fn(1, 0.0, 2.0, 1.0 / 64.0, |_| vec![0.0]).unwrap();
        let rp = lift_ito(&p, 1.0 / 8.0, 0.5, 0.45).unwrap();
        assert_eq!(rp.hoelder_norm(0.5, 2.0).unwrap(), 0.0);
        assert_eq!(rp.hoelder_norm(1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn hoelder_of_linear_path() {
        // X_t = t, h = 0.1, γ = 0.45 on [0, 1]: sup |t-s|^{1-γ} = 1
        let p = SamplePath::from_fn(1, -1.0, 1.0, 0.1 / 64.0, |t| vec![t]).unwrap();
        let rp = lift_ito(&p, 0.1, 1.0, 0.45).unwrap();
        let (s, t) = rp.nodes_of_interval(0.0, 1.0).unwrap();
        let n = rp.hoelder_norms(s, t).unwrap();
        assert!((n.path - 1.0).abs() < 1e-12, "{}", n.path);
        assert!((n.delayed_path - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hoelder_monotone_under_inclusion() {
        let p = sample_brownian(2, 0.0, 3.0, 1.0 / 128.0, 21).unwrap();
        let rp = lift_ito(&p, 1.0 / 16.0, 1.0, 0.45).unwrap();
        let inner = rp.hoelder_norm(1.25, 2.0).unwrap();
        let outer = rp.hoelder_norm(1.0, 2.5).unwrap();
        assert!(outer >= inner);
    }

    #[test]
    fn validate_examples() {
        assert!(validate_exponents(0.34, 0.49, 0.495));
        assert!((exponent_condition_lhs(0.34, 0.49) - 0.040_441_176_470_588).abs() < 1e-12);
        assert!(!validate_exponents(0.40, 0.41, 0.45));
        assert!((exponent_condition_lhs(0.40, 0.41) - 0.457_627_118_644_068).abs() < 1e-12);
        assert!(!validate_exponents(0.4, 0.4, 0.45));
        assert!(!validate_exponents(0.34, 0.49, 0.5));
    }

    #[test]
    fn augmented_path_keeps_chen_and_strips_back() {
        let p = sample_brownian(2, 0.0, 2.0, 1.0 / 256.0, 3).unwrap();
        let rp = lift_ito(&p, 1.0 / 16.0, 0.5, 0.45).unwrap();
        let aug = rp.augment_time().unwrap();
        assert_eq!(aug.dim(), 3);
        assert!(aug.chen_residual(&[(8, 12, 30), (9, 10, 11), (8, 24, 32)]) < 1e-12);
        let a = aug.area(8, 9);
        assert_eq!(a[0], 0.5 / 256.0);
        assert_eq!(aug.strip_time().unwrap(), rp);
    }

    #[test]
    fn time_cross_integration_by_parts() {
        let h_f = 1.0 / 512.0;
        let p = sample_brownian(1, 0.0, 2.0, h_f, 17).unwrap();
        let rp = lift_ito(&p, 1.0 / 8.0, 0.5, 0.45).unwrap();
        let aug = rp.augment_time().unwrap();
        for s in [4, 7, 12] {
            let t = s + 3;
            let a = aug.area(s, t);
            let dt = (t - s) as f64 / 8.0;
            let x = rp.increment(s, t)[0];
            // left-point sums miss (t-s) X_{s,t} by h_f X_{s,t}
            let lhs = a[1] + a[2];
            assert!((lhs - dt * x).abs() <= h_f * x.abs() + 1e-12, "s = {s}");
        }
    }
}
