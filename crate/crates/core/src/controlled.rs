//! Controlled and delayed controlled paths on a grid segment.
//!
//! A segment stores values `m` in `ℝ^V` and Gubinelli coefficients
//! `ζ⁰, ζ¹ ∈ L(ℝ^k, ℝ^V)` at every node. The remainder
//! `m#_{s,t} = m_{s,t} − ζ⁰_s X_{s,t} − ζ¹_s X_{s−r,t−r}` is always derived
//! from the driving rough path, never stored.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::VectorFieldBundle;
use crate::roughpath::{norm, DelayedRoughPath};

#[derive(Clone, Debug, PartialEq)]
pub struct DelayedControlledSegment {
    pub(crate) start_node: i64,
    pub(crate) step: f64,
    pub(crate) value_dim: usize,
    pub(crate) noise_dim: usize,
    pub(crate) values: Vec<f64>,
    pub(crate) zeta0: Vec<f64>,
    pub(crate) zeta1: Option<Vec<f64>>,
}

impl DelayedControlledSegment {
    /// Node-major values `(steps + 1) × V`, coefficients `(steps + 1) × V × k`.
    pub fn new(
        start_node: i64,
        step: f64,
        value_dim: usize,
        noise_dim: usize,
        values: Vec<f64>,
        zeta0: Vec<f64>,
        zeta1: Option<Vec<f64>>,
    ) -> Result<Self> {
        if value_dim == 0 || noise_dim == 0 || values.is_empty() || values.len() % value_dim != 0 {
            return Err(Error::Dimension("segment values do not match the value dimension".into()));
        }
        let nodes = values.len() / value_dim;
        let coeff = nodes * value_dim * noise_dim;
        if zeta0.len() != coeff || zeta1.as_ref().is_some_and(|z| z.len() != coeff) {
            return Err(Error::Dimension(format!(
                "coefficients must hold {coeff} entries for {nodes} nodes"
            )));
        }
        if !(step > 0.0) {
            return Err(Error::GridMismatch(format!("step must be positive, got {step}")));
        }
        Ok(DelayedControlledSegment { start_node, step, value_dim, noise_dim, values, zeta0, zeta1 })
    }

    /// Constant path with zero Gubinelli coefficients.
    pub fn constant(start_node: i64, steps: usize, step: f64, value: &[f64], noise_dim: usize) -> Self {
        let v = value.len();
        let values = value.iter().copied().cycle().take((steps + 1) * v).collect();
        DelayedControlledSegment {
            start_node,
            step,
            value_dim: v,
            noise_dim,
            values,
            zeta0: vec![0.0; (steps + 1) * v * noise_dim],
            zeta1: None,
        }
    }

    /// Path given by `f(t)` at grid times, with zero Gubinelli coefficients.
    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(
        start_node: i64,
        steps: usize,
        step: f64,
        noise_dim: usize,
        f: F,
    ) -> Result<Self> {
        let mut values = Vec::new();
        let mut dim = None;
        for j in 0..=steps {
            let v = f((start_node + j as i64) as f64 * step);
            if *dim.get_or_insert(v.len()) != v.len() {
                return Err(Error::Dimension("path function changed its output length".into()));
            }
            values.extend(v);
        }
        let v = dim.unwrap_or(0);
        Self::new(start_node, step, v, noise_dim, values, vec![0.0; (steps + 1) * v * noise_dim], None)
    }

    pub fn start_node(&self) -> i64 {
        self.start_node
    }

    pub fn end_node(&self) -> i64 {
        self.start_node + self.steps() as i64
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.values.len() / self.value_dim - 1
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn time(&self, j: usize) -> f64 {
        (self.start_node + j as i64) as f64 * self.step
    }

    pub fn value(&self, j: usize) -> &[f64] {
        &self.values[j * self.value_dim..(j + 1) * self.value_dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn zeta0(&self, j: usize) -> &[f64] {
        let c = self.value_dim * self.noise_dim;
        &self.zeta0[j * c..(j + 1) * c]
    }

    pub fn zeta0_all(&self) -> &[f64] {
        &self.zeta0
    }

    pub fn zeta1(&self, j: usize) -> Option<&[f64]> {
        let c = self.value_dim * self.noise_dim;
        self.zeta1.as_ref().map(|z| &z[j * c..(j + 1) * c])
    }

    pub fn zeta1_all(&self) -> Option<&[f64]> {
        self.zeta1.as_deref()
    }

    pub fn last_value(&self) -> &[f64] {
        self.value(self.steps())
    }

    /// True when the segment carries a nonzero delayed coefficient.
    pub fn is_delayed(&self) -> bool {
        self.zeta1.as_ref().is_some_and(|z| z.iter().any(|&v| v != 0.0))
    }

    /// Largest absolute node value.
    pub fn sup_norm(&self) -> f64 {
        (0..=self.steps()).map(|j| norm(self.value(j))).fold(0.0, f64::max)
    }

    fn check_base(&self, rp: &DelayedRoughPath) -> Result<()> {
        if rp.dim() != self.noise_dim {
            return Err(Error::Dimension(format!(
                "segment is controlled by a {}-dimensional path, rough path has dimension {}",
                self.noise_dim,
                rp.dim()
            )));
        }
        if (rp.step() - self.step).abs() > 1e-12 * self.step {
            return Err(Error::GridMismatch(format!(
                "segment step {} differs from rough path step {}",
                self.step,
                rp.step()
            )));
        }
        let lag = rp.delay_steps() as i64;
        if self.start_node - lag < rp.first_stored_node() || self.end_node() > rp.last_node() {
            return Err(Error::OutOfWindow(format!(
                "segment nodes [{}, {}] not covered by the rough path",
                self.start_node,
                self.end_node()
            )));
        }
        Ok(())
    }

    /// `m#_{s,t}` for local node indices `s <= t`.
    pub fn remainder(&self, rp: &DelayedRoughPath, s: usize, t: usize) -> Result<Vec<f64>> {
        self.check_base(rp)?;
        Ok(self.remainder_unchecked(rp, s, t))
    }

    fn remainder_unchecked(&self, rp: &DelayedRoughPath, s: usize, t: usize) -> Vec<f64> {
        let (v, k) = (self.value_dim, self.noise_dim);
        let lag = rp.delay_steps() as i64;
        let (a, b) = (self.start_node + s as i64, self.start_node + t as i64);
        let x = rp.increment(a, b);
        let xd = rp.increment(a - lag, b - lag);
        let z0 = self.zeta0(s);
        let z1 = self.zeta1(s);
        let (ms, mt) = (self.value(s), self.value(t));
        (0..v)
            .map(|i| {
                let mut r = mt[i] - ms[i];
                for l in 0..k {
                    r -= z0[i * k + l] * x[l];
                    if let Some(z1) = z1 {
                        r -= z1[i * k + l] * xd[l];
                    }
                }
                r
            })
            .collect()
    }

    fn remainder_hoelder(&self, rp: &DelayedRoughPath, exponent: f64) -> f64 {
        let n = self.steps();
        let mut sup: f64 = 0.0;
        for s in 0..n {
            for t in s + 1..=n {
                let r = self.remainder_unchecked(rp, s, t);
                sup = sup.max(norm(&r) / ((t - s) as f64 * self.step).powf(exponent));
            }
        }
        sup
    }

    /// Grid estimate of `|m_a| + |m'_a| + ‖m'‖_β + ‖m#‖_{2β}` for a plain
    /// controlled path (`ζ¹ ≡ 0`).
    pub fn norm_controlled(&self, rp: &DelayedRoughPath, beta: f64) -> Result<f64> {
        if self.is_delayed() {
            return Err(Error::WrongKind("segment has a nonzero delayed coefficient; use norm_delayed".into()));
        }
        self.check_base(rp)?;
        let c = self.value_dim * self.noise_dim;
        Ok(norm(self.value(0))
            + norm(self.zeta0(0))
            + hoelder_sup(&self.zeta0, c, self.step, beta)
            + self.remainder_hoelder(rp, 2.0 * beta))
    }

    /// Grid estimate of
    /// `|m_a| + |ζ⁰_a| + |ζ¹_a| + ‖ζ⁰‖_β + ‖ζ¹‖_β + ‖m#‖_{2β}`.
    pub fn norm_delayed(&self, rp: &DelayedRoughPath, beta: f64) -> Result<f64> {
        self.check_base(rp)?;
        Ok(self.delayed_terms(rp, beta, 2.0 * beta))
    }

    /// Grid estimate of the `(α, β, θ)` norm, which adds `‖m‖_α` to the
    /// delayed norm and measures the remainder with exponent `θ`.
    pub fn norm_delayed_general(&self, rp: &DelayedRoughPath, alpha: f64, beta: f64, theta: f64) -> Result<f64> {
        self.check_base(rp)?;
        Ok(hoelder_sup(&self.values, self.value_dim, self.step, alpha) + self.delayed_terms(rp, beta, theta))
    }

    fn delayed_terms(&self, rp: &DelayedRoughPath, beta: f64, theta: f64) -> f64 {
        let c = self.value_dim * self.noise_dim;
        let (z1_a, z1_h) = match &self.zeta1 {
            Some(z) => (norm(&z[..c]), hoelder_sup(z, c, self.step, beta)),
            None => (0.0, 0.0),
        };
        norm(self.value(0))
            + norm(self.zeta0(0))
            + z1_a
            + hoelder_sup(&self.zeta0, c, self.step, beta)
            + z1_h
            + self.remainder_hoelder(rp, theta)
    }

    /// One row per node: `t, m…, ζ⁰…, ζ¹…` (ζ¹ columns only when present).
    pub fn to_csv(&self) -> String {
        let (v, k) = (self.value_dim, self.noise_dim);
        let mut out = String::from("t");
        for i in 0..v {
            let _ = write!(out, ",m{i}");
        }
        for i in 0..v {
            for l in 0..k {
                let _ = write!(out, ",z0_{i}_{l}");
            }
        }
        if self.zeta1.is_some() {
            for i in 0..v {
                for l in 0..k {
                    let _ = write!(out, ",z1_{i}_{l}");
                }
            }
        }
        out.push('\n');
        for j in 0..=self.steps() {
            let _ = write!(out, "{:e}", self.time(j));
            for x in self.value(j).iter().chain(self.zeta0(j)).chain(self.zeta1(j).unwrap_or(&[])) {
                let _ = write!(out, ",{x:e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Grid sup of `|g_t − g_s| / (t − s)^exponent` for node-major data with
/// `dim` entries per node.
pub(crate) fn hoelder_sup(data: &[f64], dim: usize, step: f64, exponent: f64) -> f64 {
    let n = data.len() / dim;
    let mut sup: f64 = 0.0;
    for s in 0..n {
        for t in s + 1..n {
            let d2: f64 = (0..dim).map(|i| (data[t * dim + i] - data[s * dim + i]).powi(2)).sum();
            sup = sup.max(d2.sqrt() / ((t - s) as f64 * step).powf(exponent));
        }
    }
    sup
}

/// Composes the effective field with a solution segment and its past:
/// `m_s = σ(y_s, p_s)`, `ζ⁰_s = σ_x(y_s, p_s) y'_s`, `ζ¹_s = σ_y(y_s, p_s) p'_s`.
///
/// The output has values in `L(ℝ^k, ℝ^w)` flattened row-major, so it can be
/// integrated against the `k`-dimensional driver.
pub fn compose_sigma(
    y: &DelayedControlledSegment,
    past: &DelayedControlledSegment,
    vf: &VectorFieldBundle,
) -> Result<DelayedControlledSegment> {
    let w = vf.state_dim();
    let k = vf.driver_dim();
    if y.value_dim != w || past.value_dim != w {
        return Err(Error::Dimension(format!("segments must be {w}-valued")));
    }
    if y.noise_dim != k || past.noise_dim != k {
        return Err(Error::Dimension(format!("segments must carry {k}-column Gubinelli coefficients")));
    }
    if y.steps() != past.steps() || past.end_node() != y.start_node || (y.step - past.step).abs() > 1e-12 * y.step {
        return Err(Error::GridMismatch("past segment must end where the current segment starts".into()));
    }
    let n = y.steps();
    let v = w * k;
    let mut scratch = vf.scratch();
    let mut values = Vec::with_capacity((n + 1) * v);
    let mut zeta0 = vec![0.0; (n + 1) * v * k];
    let mut zeta1 = vec![0.0; (n + 1) * v * k];
    for j in 0..=n {
        vf.eval_effective(y.value(j), past.value(j), 1, &mut scratch);
        let jet = &scratch.jet;
        values.extend_from_slice(&jet.value);
        let yp = y.zeta0(j);
        let pp = past.zeta0(j);
        let z0 = &mut zeta0[j * v * k..(j + 1) * v * k];
        let z1 = &mut zeta1[j * v * k..(j + 1) * v * k];
        for e in 0..v {
            for b in 0..w {
                let gx = jet.dx[e * w + b];
                let gy = jet.dy[e * w + b];
                for l in 0..k {
                    z0[e * k + l] += gx * yp[b * k + l];
                    z1[e * k + l] += gy * pp[b * k + l];
                }
            }
        }
    }
    Ok(DelayedControlledSegment {
        start_node: y.start_node,
        step: y.step,
        value_dim: v,
        noise_dim: k,
        values,
        zeta0,
        zeta1: Some(zeta1),
    })
}
