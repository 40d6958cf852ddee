//! Stationary trajectories of `dY = C Y dt + σ(Y_t, Y_{t−r}) d𝐁_t` as
//! fixed points of
//!
//! ```text
//! Γ(Y)(t) = ∫_{t−T}^t exp((t − τ) C) σ(Y_τ, Y_{τ−r}) d𝐁_τ
//! ```

use nalgebra::DMatrix;
use serde::Serialize;

use crate::controlled::DelayedControlledSegment;
use crate::error::{Error, Result};
use crate::field::VectorFieldBundle;
use crate::integrate::{add_germ, ols_slope};
use crate::noise::integer_ratio;
use crate::roughpath::{norm, DelayedRoughPath};
use crate::solve::{advance, level2_coefficients};

/// Outcome of the check `2 M L² / λ < 1` with `|e^{tC}| ≤ M e^{−λt}`.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ContractionCheck {
    pub holds: bool,
    pub m: f64,
    pub lambda: f64,
    pub lipschitz: f64,
    pub factor: f64,
}

/// Margin subtracted from the spectral abscissa.
const LAMBDA_MARGIN: f64 = 1e-9;
const M_GRID: usize = 2001;

/// Computes `λ = −max Re σ(C) − 10⁻⁹`, fits `M` as the supremum of
/// `‖e^{tC}‖₂ e^{λt}` on `2001` points of `[0, 50/λ]` and evaluates
/// `2ML²/λ`.
pub fn contraction_condition(c: &DMatrix<f64>, lipschitz: f64) -> Result<ContractionCheck> {
    if !c.is_square() || c.nrows() == 0 {
        return Err(Error::Dimension("drift matrix must be square".into()));
    }
    let max_real = c.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_real >= 0.0 {
        return Err(Error::NotStable { max_real });
    }
    let lambda = -max_real - LAMBDA_MARGIN;
    let horizon = 50.0 / lambda;
    let mut m: f64 = 1.0;
    for i in 0..M_GRID {
        let t = horizon * i as f64 / (M_GRID - 1) as f64;
        let e = (c * t).exp();
        let s = e.singular_values().iter().copied().fold(0.0, f64::max);
        m = m.max(s * (lambda * t).exp());
    }
    let factor = 2.0 * m * lipschitz * lipschitz / lambda;
    Ok(ContractionCheck { holds: factor < 1.0, m, lambda, lipschitz, factor })
}

/// True when `σ(0,0)`, `σ_x(0,0)` and `σ_y(0,0)` all vanish and any smooth
/// drift vanishes at the origin, so that `Y ≡ 0` is stationary.
pub fn stationary_zero_check(vf: &VectorFieldBundle) -> bool {
    let w = vf.state_dim();
    let zero = vec![0.0; w];
    let mut jet = crate::field::Jet::new(w, vf.noise_dim());
    vf.sigma.eval(&zero, &zero, 1, &mut jet);
    let sigma_ok = jet.value.iter().chain(&jet.dx).chain(&jet.dy).all(|&v| v == 0.0);
    let drift_ok = vf.smooth_drift.as_ref().is_none_or(|f| {
        let mut g = crate::field::Jet::new(w, 1);
        f.eval(&zero, &zero, 0, &mut g);
        g.value.iter().all(|&v| v == 0.0)
    });
    sigma_ok && drift_ok
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryOptions {
    /// History length `T`; `None` uses `20/λ`.
    pub truncation: Option<f64>,
    /// Target sup-norm Picard residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions { truncation: None, tol: 1e-10, max_iter: 60 }
    }
}

/// Fixed point of `Γ` on a window, reported from `T` after the window
/// start so that every reported value has at least `T` of history.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryTrajectory {
    /// Segments of `Y` with `Y' = σ(Y_t, Y_{t−r})` as coefficient.
    pub segments: Vec<DelayedControlledSegment>,
    pub truncation: f64,
    pub iterations: usize,
    /// `‖Y^{m+1} − Y^m‖_∞` per iteration.
    pub residuals: Vec<f64>,
    /// Time average of `|Y^{m+1}_t − Y^m_t|²` over the reported part of the
    /// window, the empirical counterpart of `sup_t E|·|²` on which `Γ`
    /// contracts with factor `2ML²/λ`.
    pub mean_square_residuals: Vec<f64>,
    /// Ratios of consecutive mean-square residuals above the round-off
    /// level.
    pub ratios: Vec<f64>,
    /// `exp` of the least-squares slope of `ln` mean-square residual
    /// against the iteration count, over the same residuals as `ratios`.
    pub decay_ratio: Option<f64>,
    pub contraction: ContractionCheck,
    pub converged: bool,
    window_first_node: i64,
    window_values: Vec<f64>,
    delay_steps: usize,
}

/// JSON summary of a [`StationaryTrajectory`].
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StationarySummary {
    pub truncation: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub mean_square_residuals: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_ratio: Option<f64>,
    pub decay_ratio: Option<f64>,
    pub contraction: ContractionCheck,
    pub converged: bool,
    pub segments: usize,
    pub start_time: f64,
    pub variance: Vec<f64>,
    pub mean: Vec<f64>,
}

impl StationaryTrajectory {
    pub fn max_ratio(&self) -> Option<f64> {
        self.ratios.iter().copied().reduce(f64::max)
    }

    fn reported_nodes(&self) -> impl Iterator<Item = &[f64]> {
        let w = self.segments[0].value_dim();
        self.segments
            .iter()
            .enumerate()
            .flat_map(move |(i, s)| (usize::from(i > 0)..=s.steps()).map(move |j| &s.values()[j * w..(j + 1) * w]))
    }

    pub fn mean(&self) -> Vec<f64> {
        let w = self.segments[0].value_dim();
        let mut sum = vec![0.0; w];
        let mut n = 0.0;
        for v in self.reported_nodes() {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            n += 1.0;
        }
        sum.iter().map(|s| s / n).collect()
    }

    /// Componentwise sample variance over the reported nodes.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut sum = vec![0.0; mean.len()];
        let mut n = 0.0;
        for v in self.reported_nodes() {
            sum.iter_mut().zip(v).zip(&mean).for_each(|((s, x), m)| *s += (x - m).powi(2));
            n += 1.0;
        }
        sum.iter().map(|s| s / (n - 1.0)).collect()
    }

    pub fn summary(&self) -> StationarySummary {
        StationarySummary {
            truncation: self.truncation,
            iterations: self.iterations,
            residuals: self.residuals.clone(),
            mean_square_residuals: self.mean_square_residuals.clone(),
            ratios: self.ratios.clone(),
            max_ratio: self.max_ratio(),
            decay_ratio: self.decay_ratio,
            contraction: self.contraction,
            converged: self.converged,
            segments: self.segments.len(),
            start_time: self.segments[0].time(0),
            variance: self.variance(),
            mean: self.mean(),
        }
    }

    fn window_value(&self, node: i64) -> &[f64] {
        let w = self.segments[0].value_dim();
        let i = (node - self.window_first_node) as usize;
        &self.window_values[i * w..(i + 1) * w]
    }

    /// Segment `k` expressed against the time-augmented driver of the full
    /// equation `vf` (drift `C`, noise `σ`).
    pub fn driven_segment(&self, k: usize, vf: &VectorFieldBundle) -> Result<DelayedControlledSegment> {
        let seg = &self.segments[k];
        let lag = self.delay_steps as i64;
        let mut scratch = vf.scratch();
        let mut coeff = Vec::with_capacity(seg.zeta0_all().len() / seg.noise_dim() * vf.driver_dim());
        for j in 0..=seg.steps() {
            let node = seg.start_node() + j as i64;
            vf.eval_effective(self.window_value(node), self.window_value(node - lag), 0, &mut scratch);
            coeff.extend_from_slice(&scratch.jet.value);
        }
        DelayedControlledSegment::new(
            seg.start_node(),
            seg.step(),
            seg.value_dim(),
            vf.driver_dim(),
            seg.values().to_vec(),
            coeff,
            None,
        )
    }

    /// `‖φ(1, θᵏω, Y_k) − Y_{k+1}‖_∞` for consecutive reported segments,
    /// with `φ` the solver for `dY = C Y dt + σ dB`.
    pub fn relation_residuals(&self, c: &DMatrix<f64>, sigma: &VectorFieldBundle, rp: &DelayedRoughPath) -> Result<Vec<f64>> {
        let vf = sigma.clone().with_linear_drift(c.clone(), DMatrix::zeros(c.nrows(), c.ncols()))?;
        let driver = vf.driver(rp)?;
        let mut scratch = vf.scratch();
        let mut out = Vec::with_capacity(self.segments.len().saturating_sub(1));
        for k in 0..self.segments.len().saturating_sub(1) {
            let past = self.driven_segment(k, &vf)?;
            let next = advance(&past, &driver, &vf, &mut scratch)?;
            let stored = &self.segments[k + 1];
            let w = stored.value_dim();
            let diff = (0..=stored.steps())
                .map(|j| {
                    let d: Vec<f64> = next.value(j).iter().zip(stored.value(j)).map(|(a, b)| a - b).collect();
                    norm(&d[..w])
                })
                .fold(0.0, f64::max);
            out.push(diff);
        }
        Ok(out)
    }
}

/// Picard iteration for `Γ` on the whole window of `rp`, starting from
/// `Y ≡ 0` and with `Y = 0` before the window.
///
/// Each coarse step uses the exact kernel `e^{(h − l h_f) C}` against the
/// fine Brownian increments plus the level-2 corrections
/// `σ_x σ : 𝕏 + σ_y Y'(−r) : 𝕏(−r)`.
pub fn find_stationary(
    c: &DMatrix<f64>,
    sigma: &VectorFieldBundle,
    rp: &DelayedRoughPath,
    opts: &StationaryOptions,
) -> Result<StationaryTrajectory> {
    let w = sigma.state_dim();
    let d = sigma.noise_dim();
    if sigma.has_drift() {
        return Err(Error::Config("the noise field must not carry drift; pass the drift as C".into()));
    }
    if c.shape() != (w, w) {
        return Err(Error::Dimension(format!("C must be {w}×{w}")));
    }
    if rp.is_time_augmented() || rp.dim() != d {
        return Err(Error::Dimension(format!("expected a plain {d}-dimensional rough path")));
    }
    let lipschitz = sigma
        .sigma
        .lipschitz()
        .ok_or_else(|| Error::Config("σ has no global Lipschitz constant".into()))?;
    let contraction = contraction_condition(c, lipschitz)?;
    if !contraction.holds {
        return Err(Error::NotContractive { factor: contraction.factor });
    }
    let truncation = opts.truncation.unwrap_or(20.0 / contraction.lambda);
    let source = rp
        .source()
        .ok_or_else(|| Error::MissingFineData("stationary construction needs the fine sample path".into()))?;
    let h = rp.step();
    let h_f = source.fine_step();
    let refine = integer_ratio(h, h_f)
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::GridMismatch("coarse step is not a multiple of the fine step".into()))? as usize;
    let n = rp.delay_steps();
    let m = rp.n_intervals();
    let first = rp.first_node();
    let skip = (truncation / rp.delay()).ceil() as usize * n;
    if skip + n > m {
        return Err(Error::OutOfWindow(format!(
            "window of {} time units cannot hold a history of {truncation} plus one segment",
            m as f64 * h
        )));
    }

    let step_kernel = (c * h).exp();
    let kernels: Vec<DMatrix<f64>> = (0..refine).map(|l| (c * (h - l as f64 * h_f)).exp()).collect();
    // conv[i][(a w + b) d + j] = Σ_l K_l[a, b] ΔB^j_l on interval i
    let mut conv = vec![0.0; m * w * w * d];
    for i in 0..m {
        let f0 = source.fine_index(rp.time(first + i as i64))?;
        let block = &mut conv[i * w * w * d..(i + 1) * w * w * d];
        for (l, kern) in kernels.iter().enumerate() {
            for j in 0..d {
                let db = source.increment(f0 + l, f0 + l + 1, j);
                for a in 0..w {
                    for b in 0..w {
                        block[(a * w + b) * d + j] += kern[(a, b)] * db;
                    }
                }
            }
        }
    }

    let zero = vec![0.0; w];
    let mut jet = crate::field::Jet::new(w, d);
    let mut sig = vec![0.0; (m + 1) * w * d];
    let mut z0 = vec![0.0; w * d * d];
    let mut z1 = vec![0.0; w * d * d];
    let no_increment = vec![0.0; w * d];
    let x0 = vec![0.0; d];
    let mut gamma = |y: &[f64], out: &mut [f64]| {
        out[..w].iter_mut().for_each(|v| *v = 0.0);
        for i in 0..=m {
            let yi = &y[i * w..(i + 1) * w];
            let yd = if i >= n { &y[(i - n) * w..(i - n + 1) * w] } else { &zero[..] };
            sigma.sigma.eval(yi, yd, 1, &mut jet);
            sig[i * w * d..(i + 1) * w * d].copy_from_slice(&jet.value);
            if i == m {
                break;
            }
            let past_coeff = if i >= n { &sig[(i - n) * w * d..(i - n + 1) * w * d] } else { &no_increment[..] };
            let (cur, rest) = out.split_at_mut((i + 1) * w);
            let next = &mut rest[..w];
            let prev = &cur[i * w..];
            let block = &conv[i * w * w * d..(i + 1) * w * w * d];
            for a in 0..w {
                let mut v = 0.0;
                for b in 0..w {
                    v += step_kernel[(a, b)] * prev[b];
                    for j in 0..d {
                        v += block[(a * w + b) * d + j] * jet.value[b * d + j];
                    }
                }
                next[a] = v;
            }
            level2_coefficients(w, d, &jet.dx, &jet.dy, &jet.value, past_coeff, &mut z0, &mut z1);
            let node = first + i as i64;
            add_germ(
                w,
                d,
                &no_increment,
                &z0,
                Some(&z1),
                &x0,
                rp.interval_area(node),
                rp.interval_delayed_area(node),
                next,
            );
        }
    };

    let mut y = vec![0.0; (m + 1) * w];
    let mut next = vec![0.0; (m + 1) * w];
    let mut residuals = Vec::new();
    let mut mean_square = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        gamma(&y, &mut next);
        let dist: Vec<f64> = (0..=m)
            .map(|i| {
                let diff: Vec<f64> = (0..w).map(|a| next[i * w + a] - y[i * w + a]).collect();
                norm(&diff)
            })
            .collect();
        let res = dist.iter().copied().fold(0.0, f64::max);
        std::mem::swap(&mut y, &mut next);
        if !res.is_finite() {
            return Err(Error::Divergence { node: first, time: rp.time(first), magnitude: res });
        }
        residuals.push(res);
        mean_square.push(dist[skip..].iter().map(|v| v * v).sum::<f64>() / (m + 1 - skip) as f64);
        if res <= opts.tol {
            converged = true;
            break;
        }
    }
    let scale = y.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let floor = (1e-13 * scale).powi(2);
    let ratios = mean_square.windows(2).filter(|p| p[0] > floor && p[1] > floor).map(|p| p[1] / p[0]).collect();
    let pts: Vec<(f64, f64)> =
        mean_square.iter().enumerate().filter(|(_, &r)| r > floor).map(|(i, r)| (i as f64, r.ln())).collect();
    let decay_ratio = ols_slope(&pts).map(f64::exp);

    let mut segments = Vec::new();
    let mut s = skip;
    while s + n <= m {
        let mut coeff = Vec::with_capacity((n + 1) * w * d);
        for i in s..=s + n {
            let yi = &y[i * w..(i + 1) * w];
            let yd = if i >= n { &y[(i - n) * w..(i - n + 1) * w] } else { &zero[..] };
            sigma.sigma.eval(yi, yd, 0, &mut jet);
            coeff.extend_from_slice(&jet.value);
        }
        segments.push(DelayedControlledSegment::new(
            first + s as i64,
            h,
            w,
            d,
            y[s * w..(s + n + 1) * w].to_vec(),
            coeff,
            None,
        )?);
        s += n;
    }
    let mut window_values = vec![0.0; n * w];
    window_values.extend_from_slice(&y);
    Ok(StationaryTrajectory {
        segments,
        truncation,
        iterations: residuals.len(),
        residuals,
        mean_square_residuals: mean_square,
        ratios,
        decay_ratio,
        contraction,
        converged,
        window_first_node: first - n as i64,
        window_values,
        delay_steps: n,
    })
}
