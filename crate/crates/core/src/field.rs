//! Vector fields `σ(x, y)` with their first and second partials, and the
//! bundle that adds linear and smooth drift.
//!
//! A field maps a state `x ∈ ℝ^w` and a delayed state `y ∈ ℝ^w` to a
//! `w × k` matrix. Derivatives are returned in a [`Jet`]:
//!
//! ```text
//! value[a k + j]                 = σ_{aj}
//! dx[(a k + j) w + b]            = ∂σ_{aj}/∂x_b
//! dxy[((a k + j) w + b) w + c]   = ∂²σ_{aj}/∂x_b ∂y_c
//! ```
//!
//! and likewise for `dy`, `dxx`, `dyy`.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::roughpath::DelayedRoughPath;

/// Value and partial derivatives of a field at one point.
#[derive(Clone, Debug, Default)]
pub struct Jet {
    pub w: usize,
    pub k: usize,
    pub value: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dxx: Vec<f64>,
    pub dxy: Vec<f64>,
    pub dyy: Vec<f64>,
}

impl Jet {
    pub fn new(w: usize, k: usize) -> Self {
        let n = w * k;
        Jet {
            w,
            k,
            value: vec![0.0; n],
            dx: vec![0.0; n * w],
            dy: vec![0.0; n * w],
            dxx: vec![0.0; n * w * w],
            dxy: vec![0.0; n * w * w],
            dyy: vec![0.0; n * w * w],
        }
    }

    /// Zeroes the entries up to the given derivative order.
    pub fn clear(&mut self, order: usize) {
        self.value.iter_mut().for_each(|v| *v = 0.0);
        if order >= 1 {
            self.dx.iter_mut().for_each(|v| *v = 0.0);
            self.dy.iter_mut().for_each(|v| *v = 0.0);
        }
        if order >= 2 {
            self.dxx.iter_mut().for_each(|v| *v = 0.0);
            self.dxy.iter_mut().for_each(|v| *v = 0.0);
            self.dyy.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// A matrix-valued field `σ: ℝ^w × ℝ^w → ℝ^{w×k}`.
pub trait Field: Send + Sync + Debug {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// Fills `jet` up to derivative `order` (0, 1 or 2). Entries above
    /// `order` are left untouched.
    fn eval(&self, x: &[f64], y: &[f64], order: usize, jet: &mut Jet);
    /// Global Lipschitz constant in each argument, when one is known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// Scalar function of two scalars with closed-form partials.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarMap {
    /// `Σ c x^p y^q` over `(p, q, c)` terms.
    Polynomial(Vec<(u32, u32, f64)>),
    /// `c sin(x) y`
    SineProduct { c: f64 },
    /// `offset + a sin(x) + b sin(y)`
    Sine { offset: f64, a: f64, b: f64 },
}

/// `(g, g_x, g_y, g_xx, g_xy, g_yy)`
type Partials = [f64; 6];

fn powd(x: f64, p: u32) -> f64 {
    x.powi(p as i32)
}

impl ScalarMap {
    pub fn eval(&self, x: f64, y: f64) -> Partials {
        match self {
            ScalarMap::Polynomial(terms) => {
                let mut out = [0.0; 6];
                for &(p, q, c) in terms {
                    let xp = powd(x, p);
                    let yq = powd(y, q);
                    let fp = p as f64;
                    let fq = q as f64;
                    let xp1 = if p >= 1 { fp * powd(x, p - 1) } else { 0.0 };
                    let yq1 = if q >= 1 { fq * powd(y, q - 1) } else { 0.0 };
                    let xp2 = if p >= 2 { fp * (fp - 1.0) * powd(x, p - 2) } else { 0.0 };
                    let yq2 = if q >= 2 { fq * (fq - 1.0) * powd(y, q - 2) } else { 0.0 };
                    out[0] += c * xp * yq;
                    out[1] += c * xp1 * yq;
                    out[2] += c * xp * yq1;
                    out[3] += c * xp2 * yq;
                    out[4] += c * xp1 * yq1;
                    out[5] += c * xp * yq2;
                }
                out
            }
            ScalarMap::SineProduct { c } => {
                let (s, co) = x.sin_cos();
                [c * s * y, c * co * y, c * s, -c * s * y, c * co, 0.0]
            }
            ScalarMap::Sine { offset, a, b } => {
                let (sx, cx) = x.sin_cos();
                let (sy, cy) = y.sin_cos();
                [offset + a * sx + b * sy, a * cx, b * cy, -a * sx, 0.0, -b * sy]
            }
        }
    }

    /// Lipschitz bound in each argument, if globally finite.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            ScalarMap::Polynomial(terms) => {
                let mut l: f64 = 0.0;
                for &(p, q, c) in terms {
                    if c == 0.0 {
                        continue;
                    }
                    match (p, q) {
                        (0, 0) => {}
                        (1, 0) | (0, 1) => l = l.max(c.abs()),
                        _ => return None,
                    }
                }
                Some(l)
            }
            ScalarMap::SineProduct { c } => (*c == 0.0).then_some(0.0),
            ScalarMap::Sine { a, b, .. } => Some(a.abs().max(b.abs())),
        }
    }
}

/// How a list of scalar maps is arranged into a `w × k` field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// `w × w`, entry `(a, a)` is `g_a(x_a, y_a)`.
    Diagonal,
    /// `w × 1`, entry `(a, 0)` is `g_a(x_a, y_a)`.
    Column,
}

/// Componentwise field built from scalar maps acting on `(x_a, y_a)`.
#[derive(Clone, Debug)]
pub struct DiagonalField {
    maps: Vec<ScalarMap>,
    layout: Layout,
}

impl DiagonalField {
    pub fn new(maps: Vec<ScalarMap>, layout: Layout) -> Self {
        assert!(!maps.is_empty(), "at least one component map is required");
        DiagonalField { maps, layout }
    }

    pub fn scalar(map: ScalarMap) -> Self {
        DiagonalField::new(vec![map], Layout::Diagonal)
    }
}

impl Field for DiagonalField {
    fn state_dim(&self) -> usize {
        self.maps.len()
    }

    fn noise_dim(&self) -> usize {
        match self.layout {
            Layout::Diagonal => self.maps.len(),
            Layout::Column => 1,
        }
    }

    fn eval(&self, x: &[f64], y: &[f64], order: usize, jet: &mut Jet) {
        let w = self.maps.len();
        let k = self.noise_dim();
        jet.clear(order);
        for (a, map) in self.maps.iter().enumerate() {
            let g = map.eval(x[a], y[a]);
            let j = match self.layout {
                Layout::Diagonal => a,
                Layout::Column => 0,
            };
            let e = a * k + j;
            jet.value[e] = g[0];
            if order >= 1 {
                jet.dx[e * w + a] = g[1];
                jet.dy[e * w + a] = g[2];
            }
            if order >= 2 {
                jet.dxx[(e * w + a) * w + a] = g[3];
                jet.dxy[(e * w + a) * w + a] = g[4];
                jet.dyy[(e * w + a) * w + a] = g[5];
            }
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        self.maps.iter().try_fold(0.0_f64, |acc, m| m.lipschitz().map(|l| acc.max(l)))
    }
}

/// Affine field: column `j` is `offset_j + A_j x + C_j y`.
#[derive(Clone, Debug)]
pub struct LinearField {
    offset: DMatrix<f64>,
    state_maps: Vec<DMatrix<f64>>,
    delay_maps: Vec<DMatrix<f64>>,
}

impl LinearField {
    pub fn new(offset: DMatrix<f64>, state_maps: Vec<DMatrix<f64>>, delay_maps: Vec<DMatrix<f64>>) -> Result<Self> {
        let w = offset.nrows();
        let k = offset.ncols();
        let ok = state_maps.len() == k
            && delay_maps.len() == k
            && state_maps.iter().chain(&delay_maps).all(|m| m.nrows() == w && m.ncols() == w);
        if !ok || w == 0 || k == 0 {
            return Err(Error::Dimension("linear field matrices have inconsistent shapes".into()));
        }
        Ok(LinearField { offset, state_maps, delay_maps })
    }

    /// Scalar `σ(x, y) = c + a x + b y`.
    pub fn scalar(c: f64, a: f64, b: f64) -> Self {
        let one = |v| DMatrix::from_element(1, 1, v);
        LinearField { offset: one(c), state_maps: vec![one(a)], delay_maps: vec![one(b)] }
    }

    /// Constant field.
    pub fn constant(value: DMatrix<f64>) -> Self {
        let w = value.nrows();
        let k = value.ncols();
        LinearField {
            offset: value,
            state_maps: vec![DMatrix::zeros(w, w); k],
            delay_maps: vec![DMatrix::zeros(w, w); k],
        }
    }
}

impl Field for LinearField {
    fn state_dim(&self) -> usize {
        self.offset.nrows()
    }

    fn noise_dim(&self) -> usize {
        self.offset.ncols()
    }

    fn eval(&self, x: &[f64], y: &[f64], order: usize, jet: &mut Jet) {
        let w = self.state_dim();
        let k = self.noise_dim();
        jet.clear(order);
        for j in 0..k {
            let a_mat = &self.state_maps[j];
            let c_mat = &self.delay_maps[j];
            for a in 0..w {
                let mut v = self.offset[(a, j)];
                for b in 0..w {
                    v += a_mat[(a, b)] * x[b] + c_mat[(a, b)] * y[b];
                    if order >= 1 {
                        jet.dx[(a * k + j) * w + b] = a_mat[(a, b)];
                        jet.dy[(a * k + j) * w + b] = c_mat[(a, b)];
                    }
                }
                jet.value[a * k + j] = v;
            }
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        let mut l: f64 = 0.0;
        for m in self.state_maps.iter().chain(&self.delay_maps) {
            l = l.max(m.norm());
        }
        Some(l)
    }
}

/// Noise coefficient `σ` together with linear drift `B(x, y) = B_x x + B_y y`
/// and an optional smooth drift `f` (a `w × 1` field).
///
/// When drift is present the solver drives the *effective* field
/// `(B + f, σ)` with the time-augmented rough path, so column 0 of every
/// effective quantity refers to time.
#[derive(Clone, Debug)]
pub struct VectorFieldBundle {
    pub sigma: Arc<dyn Field>,
    pub drift_state: DMatrix<f64>,
    pub drift_delay: DMatrix<f64>,
    pub smooth_drift: Option<Arc<dyn Field>>,
    /// Declared smoothness class of σ (3 or 4).
    pub smoothness: u8,
}

/// Scratch buffers for evaluating the effective field.
#[derive(Clone, Debug)]
pub struct JetScratch {
    pub jet: Jet,
    sigma: Jet,
    drift: Jet,
}

impl VectorFieldBundle {
    /// Bundle without drift.
    pub fn new(sigma: Arc<dyn Field>) -> Self {
        let w = sigma.state_dim();
        VectorFieldBundle {
            sigma,
            drift_state: DMatrix::zeros(w, w),
            drift_delay: DMatrix::zeros(w, w),
            smooth_drift: None,
            smoothness: 3,
        }
    }

    pub fn with_linear_drift(mut self, state: DMatrix<f64>, delay: DMatrix<f64>) -> Result<Self> {
        let w = self.state_dim();
        if state.shape() != (w, w) || delay.shape() != (w, w) {
            return Err(Error::Dimension(format!("drift matrices must be {w}×{w}")));
        }
        self.drift_state = state;
        self.drift_delay = delay;
        self.smoothness = 4;
        Ok(self)
    }

    pub fn with_smooth_drift(mut self, f: Arc<dyn Field>) -> Result<Self> {
        if f.state_dim() != self.state_dim() || f.noise_dim() != 1 {
            return Err(Error::Dimension("smooth drift must be a w×1 field".into()));
        }
        self.smooth_drift = Some(f);
        self.smoothness = 4;
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.sigma.state_dim()
    }

    /// Dimension of the noise driving σ.
    pub fn noise_dim(&self) -> usize {
        self.sigma.noise_dim()
    }

    pub fn has_drift(&self) -> bool {
        self.smooth_drift.is_some()
            || self.drift_state.iter().any(|&v| v != 0.0)
            || self.drift_delay.iter().any(|&v| v != 0.0)
    }

    /// Columns of the effective field: `d + 1` with drift, `d` without.
    pub fn driver_dim(&self) -> usize {
        self.noise_dim() + usize::from(self.has_drift())
    }

    pub fn scratch(&self) -> JetScratch {
        let w = self.state_dim();
        JetScratch {
            jet: Jet::new(w, self.driver_dim()),
            sigma: Jet::new(w, self.noise_dim()),
            drift: Jet::new(w, 1),
        }
    }

    /// Returns the rough path the effective field must be driven by.
    pub fn driver<'a>(&self, rp: &'a DelayedRoughPath) -> Result<std::borrow::Cow<'a, DelayedRoughPath>> {
        use std::borrow::Cow;
        match (self.has_drift(), rp.is_time_augmented()) {
            (false, false) | (true, true) => {}
            (true, false) => return Ok(Cow::Owned(rp.augment_time()?)),
            (false, true) => {
                return Err(Error::Dimension(
                    "time-augmented rough path given to a field without drift".into(),
                ))
            }
        }
        if rp.dim() != self.driver_dim() {
            return Err(Error::Dimension(format!(
                "rough path has dimension {}, field expects {}",
                rp.dim(),
                self.driver_dim()
            )));
        }
        Ok(Cow::Borrowed(rp))
    }

    /// Evaluates the effective field `(B + f, σ)` (or `σ` without drift)
    /// into `scratch.jet`.
    pub fn eval_effective(&self, x: &[f64], y: &[f64], order: usize, scratch: &mut JetScratch) {
        if !self.has_drift() {
            self.sigma.eval(x, y, order, &mut scratch.jet);
            return;
        }
        let w = self.state_dim();
        let d = self.noise_dim();
        let k = d + 1;
        self.sigma.eval(x, y, order, &mut scratch.sigma);
        let out = &mut scratch.jet;
        out.clear(order);
        let s = &scratch.sigma;
        let copy_block = |dst: &mut [f64], src: &[f64], per: usize| {
            for a in 0..w {
                for j in 0..d {
                    let from = (a * d + j) * per;
                    let to = (a * k + j + 1) * per;
                    dst[to..to + per].copy_from_slice(&src[from..from + per]);
                }
            }
        };
        copy_block(&mut out.value, &s.value, 1);
        if order >= 1 {
            copy_block(&mut out.dx, &s.dx, w);
            copy_block(&mut out.dy, &s.dy, w);
        }
        if order >= 2 {
            copy_block(&mut out.dxx, &s.dxx, w * w);
            copy_block(&mut out.dxy, &s.dxy, w * w);
            copy_block(&mut out.dyy, &s.dyy, w * w);
        }
        for a in 0..w {
            let mut v = 0.0;
            for b in 0..w {
                v += self.drift_state[(a, b)] * x[b] + self.drift_delay[(a, b)] * y[b];
                if order >= 1 {
                    out.dx[(a * k) * w + b] = self.drift_state[(a, b)];
                    out.dy[(a * k) * w + b] = self.drift_delay[(a, b)];
                }
            }
            out.value[a * k] = v;
        }
        if let Some(f) = &self.smooth_drift {
            f.eval(x, y, order, &mut scratch.drift);
            let g = &scratch.drift;
            for a in 0..w {
                out.value[a * k] += g.value[a];
                if order >= 1 {
                    for b in 0..w {
                        out.dx[(a * k) * w + b] += g.dx[a * w + b];
                        out.dy[(a * k) * w + b] += g.dy[a * w + b];
                    }
                }
                if order >= 2 {
                    let ww = w * w;
                    for bc in 0..ww {
                        out.dxx[(a * k) * ww + bc] = g.dxx[a * ww + bc];
                        out.dxy[(a * k) * ww + bc] = g.dxy[a * ww + bc];
                        out.dyy[(a * k) * ww + bc] = g.dyy[a * ww + bc];
                    }
                }
            }
        }
    }

    /// Largest discrepancy between analytic partials of σ (and `f`) and
    /// central finite differences at `probes` random points in `[-2, 2]^{2w}`.
    ///
    /// The error of each entry is `|fd - exact| / max(1, |exact|)`.
    pub fn partials_check(&self, probes: usize, step: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut fields: Vec<&dyn Field> = vec![self.sigma.as_ref()];
        if let Some(f) = &self.smooth_drift {
            fields.push(f.as_ref());
        }
        for field in fields {
            let w = field.state_dim();
            let k = field.noise_dim();
            let mut at = Jet::new(w, k);
            let mut plus = Jet::new(w, k);
            let mut minus = Jet::new(w, k);
            for _ in 0..probes {
                let x: Vec<f64> = (0..w).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y: Vec<f64> = (0..w).map(|_| rng.random_range(-2.0..2.0)).collect();
                field.eval(&x, &y, 2, &mut at);
                for b in 0..w {
                    for delayed in [false, true] {
                        let (mut xp, mut yp) = (x.clone(), y.clone());
                        let (mut xm, mut ym) = (x.clone(), y.clone());
                        if delayed {
                            yp[b] += step;
                            ym[b] -= step;
                        } else {
                            xp[b] += step;
                            xm[b] -= step;
                        }
                        field.eval(&xp, &yp, 1, &mut plus);
                        field.eval(&xm, &ym, 1, &mut minus);
                        for e in 0..w * k {
                            let fd = (plus.value[e] - minus.value[e]) / (2.0 * step);
                            let exact = if delayed { at.dy[e * w + b] } else { at.dx[e * w + b] };
                            worst = worst.max(rel_err(fd, exact));
                            for c in 0..w {
                                // differentiate the first partials in direction b
                                let fdx = (plus.dx[e * w + c] - minus.dx[e * w + c]) / (2.0 * step);
                                let fdy = (plus.dy[e * w + c] - minus.dy[e * w + c]) / (2.0 * step);
                                let (ex_x, ex_y) = if delayed {
                                    (at.dxy[(e * w + c) * w + b], at.dyy[(e * w + c) * w + b])
                                } else {
                                    (at.dxx[(e * w + c) * w + b], at.dxy[(e * w + b) * w + c])
                                };
                                worst = worst.max(rel_err(fdx, ex_x)).max(rel_err(fdy, ex_y));
                            }
                        }
                    }
                }
            }
        }
        worst
    }
}

fn rel_err(fd: f64, exact: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(1.0)
}
