//! Seeded Brownian sample paths on a uniform fine grid.
//!
//! A [`SamplePath`] keeps the raw generated array behind an [`Arc`] together
//! with an anchor node whose value is subtracted on read. Wiener shifts only
//! move the time origin and the anchor, so they never copy or re-simulate
//! data and composing shifts is bitwise identical to a single shift.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that a length is an integer
/// multiple of a step.
pub(crate) const GRID_TOL: f64 = 1e-12;

/// Returns `len / step` as an integer when the ratio is integral within
/// [`GRID_TOL`] relative tolerance.
pub(crate) fn integer_ratio(len: f64, step: f64) -> Option<i64> {
    if !(step > 0.0) || !len.is_finite() {
        return None;
    }
    let q = len / step;
    let n = q.round();
    if (q - n).abs() <= GRID_TOL * n.abs().max(1.0) {
        Some(n as i64)
    } else {
        None
    }
}

/// Fine-grid sample of a `dim`-dimensional driving signal.
#[derive(Clone, Debug)]
pub struct SamplePath {
    dim: usize,
    fine_step: f64,
    /// Time of raw node 0 at generation.
    origin: f64,
    /// Accumulated Wiener shift, in fine nodes.
    shift_nodes: i64,
    n_nodes: usize,
    raw: Arc<Vec<f64>>,
    anchor: Option<usize>,
    seed: u64,
}

/// Draws a Brownian path with covariance `h_f * I` per fine increment.
///
/// The path is anchored at `t = 0` when zero is a grid node inside the
/// window (two-sided Brownian motion with `B_0 = 0`) and at `t_start`
/// otherwise.
pub fn sample_brownian(dim: usize, t_start: f64, t_end: f64, h_f: f64, seed: u64) -> Result<SamplePath> {
    if dim == 0 {
        return Err(Error::Config("noise dimension must be positive".into()));
    }
    if !(h_f > 0.0) || !(t_end > t_start) {
        return Err(Error::GridMismatch(format!(
            "need h_f > 0 and t_start < t_end, got h_f = {h_f}, window [{t_start}, {t_end}]"
        )));
    }
    let steps = integer_ratio(t_end - t_start, h_f).ok_or_else(|| {
        Error::GridMismatch(format!(
            "window length {} is not a multiple of fine step {h_f}",
            t_end - t_start
        ))
    })? as usize;
    let n_nodes = steps + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = h_f.sqrt();
    let mut raw = vec![0.0; n_nodes * dim];
    for i in 1..n_nodes {
        for c in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            raw[i * dim + c] = raw[(i - 1) * dim + c] + scale * z;
        }
    }

    let anchor = match integer_ratio(-t_start, h_f) {
        Some(k) if k >= 0 && (k as usize) < n_nodes => k as usize,
        _ => 0,
    };

    Ok(SamplePath {
        dim,
        fine_step: h_f,
        origin: t_start,
        shift_nodes: 0,
        n_nodes,
        raw: Arc::new(raw),
        anchor: Some(anchor),
        seed,
    })
}

impl SamplePath {
    /// Builds a deterministic path by evaluating `f` at every fine node.
    /// Values are stored as given (no anchoring).
    pub fn from_fn<F>(dim: usize, t_start: f64, t_end: f64, h_f: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        if dim == 0 || !(h_f > 0.0) || !(t_end > t_start) {
            return Err(Error::GridMismatch("invalid deterministic path grid".into()));
        }
        let steps = integer_ratio(t_end - t_start, h_f).ok_or_else(|| {
            Error::GridMismatch(format!(
                "window length {} is not a multiple of fine step {h_f}",
                t_end - t_start
            ))
        })? as usize;
        let mut raw = Vec::with_capacity((steps + 1) * dim);
        for i in 0..=steps {
            let v = f(t_start + i as f64 * h_f);
            if v.len() != dim {
                return Err(Error::Dimension(format!(
                    "path function returned {} components, expected {dim}",
                    v.len()
                )));
            }
            raw.extend_from_slice(&v);
        }
        Ok(SamplePath {
            dim,
            fine_step: h_f,
            origin: t_start,
            shift_nodes: 0,
            n_nodes: steps + 1,
            raw: Arc::new(raw),
            anchor: None,
            seed: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fine_step(&self) -> f64 {
        self.fine_step
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Time of fine node `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.origin + (i as i64 - self.shift_nodes) as f64 * self.fine_step
    }

    pub fn t_start(&self) -> f64 {
        self.time(0)
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_nodes - 1)
    }

    /// Fine node index of time `t`, if `t` is a node of this path.
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let k = integer_ratio(t - self.t_start(), self.fine_step)?;
        (k >= 0 && (k as usize) < self.n_nodes).then_some(k as usize)
    }

    /// Component `c` of the value at fine node `i`.
    pub fn value(&self, i: usize, c: usize) -> f64 {
        let v = self.raw[i * self.dim + c];
        match self.anchor {
            Some(a) => v - self.raw[a * self.dim + c],
            None => v,
        }
    }

    /// All values, node-major.
    pub fn values(&self) -> Vec<f64> {
        (0..self.n_nodes)
            .flat_map(|i| (0..self.dim).map(move |c| (i, c)))
            .map(|(i, c)| self.value(i, c))
            .collect()
    }

    /// Increment of component `c` between fine nodes `i` and `j`, read from
    /// the raw array so it is independent of the anchor.
    #[inline]
    pub fn increment(&self, i: usize, j: usize, c: usize) -> f64 {
        self.raw[j * self.dim + c] - self.raw[i * self.dim + c]
    }

    /// Realizes the shift `theta_{n r}`: time is re-based by `n * r` and
    /// the value at the shift point is subtracted.
    ///
    /// The window must contain `[n r - r, n r + r]`.
    pub fn wiener_shift(&self, n_segments: i64, r: f64) -> Result<SamplePath> {
        let r_nodes = integer_ratio(r, self.fine_step).filter(|&k| k > 0).ok_or_else(|| {
            Error::GridMismatch(format!("delay {r} is not a positive multiple of {}", self.fine_step))
        })?;
        let shift = n_segments * r_nodes;
        let point = n_segments as f64 * r;
        let k = self.node_of(point).map(|k| k as i64);
        let inside = k.is_some_and(|k| k - r_nodes >= 0 && k + r_nodes <= self.n_nodes as i64 - 1);
        if !inside {
            return Err(Error::OutOfWindow(format!(
                "shift by {n_segments} segments (t = {point}) needs [{}, {}] inside [{}, {}]",
                point - r,
                point + r,
                self.t_start(),
                self.t_end()
            )));
        }
        let k = k.unwrap_or_default();
        let mut out = self.clone();
        out.shift_nodes = self.shift_nodes + shift;
        out.anchor = Some(k as usize);
        Ok(out)
    }

    /// Fine node index (within this path) of absolute time `t`, assuming
    /// `t` is a multiple of the fine step.
    pub(crate) fn fine_index(&self, t: f64) -> Result<usize> {
        self.node_of(t).ok_or_else(|| {
            Error::GridMismatch(format!(
                "time {t} is not a fine node of window [{}, {}] (step {})",
                self.t_start(),
                self.t_end(),
                self.fine_step
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_window_node_count() {
        let p = sample_brownian(1, 0.0, 1.0, 1.0 / 1024.0, 7).unwrap();
        assert_eq!(p.n_nodes(), 1025);
        assert_eq!(p.value(0, 0), 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = sample_brownian(2, -1.0, 3.0, 1.0 / 64.0, 11).unwrap();
        let b = sample_brownian(2, -1.0, 3.0, 1.0 / 64.0, 11).unwrap();
        assert_eq!(a.values(), b.values());
        let c = sample_brownian(2, -1.0, 3.0, 1.0 / 64.0, 12).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn increment_mean_within_clt_band() {
        let h = 1.0 / 256.0;
        for seed in 0..5 {
            let p = sample_brownian(1, 0.0, 16.0, h, seed).unwrap();
            let n = (p.n_nodes() - 1) as f64;
            let mean = p.increment(0, p.n_nodes() - 1, 0) / n;
            // std of the mean of n iid N(0, h) increments
            let band = 4.0 * (h / n).sqrt();
            assert!(mean.abs() < band, "seed {seed}: mean {mean} outside {band}");
        }
    }

    #[test]
    fn increment_variance_matches_step() {
        let h = 1.0 / 128.0;
        let p = sample_brownian(1, 0.0, 64.0, h, 3).unwrap();
        let n = p.n_nodes() - 1;
        let var = (0..n).map(|i| p.increment(i, i + 1, 0).powi(2)).sum::<f64>() / n as f64;
        // relative std of the sample variance is sqrt(2 / n)
        assert!((var / h - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn non_commensurate_window_rejected() {
        let err = sample_brownian(1, 0.0, 1.0, 0.3, 1).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn two_sided_path_is_zero_at_origin() {
        let p = sample_brownian(1, -2.0, 2.0, 1.0 / 32.0, 5).unwrap();
        let i0 = p.node_of(0.0).unwrap();
        assert_eq!(p.value(i0, 0), 0.0);
    }

    #[test]
    fn shift_zero_is_identity() {
        let p = sample_brownian(2, -2.0, 2.0, 1.0 / 32.0, 5).unwrap();
        let q = p.wiener_shift(0, 1.0).unwrap();
        assert_eq!(p.values(), q.values());
        assert_eq!(p.t_start(), q.t_start());
    }

    #[test]
    fn shift_matches_definition() {
        let r = 0.5;
        let p = sample_brownian(1, -1.0, 4.0, 1.0 / 64.0, 9).unwrap();
        let q = p.wiener_shift(3, r).unwrap();
        assert_eq!(q.t_start(), p.t_start() - 1.5);
        let base = p.node_of(1.5).unwrap();
        let q0 = q.node_of(0.0).unwrap();
        assert_eq!(q.value(q0, 0), 0.0);
        // increments over [0, r] of the shifted path equal those over [3r, 4r]
        let steps = 32;
        for l in 0..steps {
            assert_eq!(q.increment(q0 + l, q0 + l + 1, 0), p.increment(base + l, base + l + 1, 0));
        }
        for i in 0..q.n_nodes() {
            let expect = p.value(i, 0) - p.value(base, 0);
            assert!((q.value(i, 0) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_outside_window_rejected() {
        let p = sample_brownian(1, 0.0, 4.0, 1.0 / 16.0, 1).unwrap();
        assert!(matches!(p.wiener_shift(4, 1.0), Err(Error::OutOfWindow(_))));
        assert!(matches!(p.wiener_shift(0, 1.0), Err(Error::OutOfWindow(_))));
        assert!(p.wiener_shift(1, 1.0).is_ok());
    }
}
