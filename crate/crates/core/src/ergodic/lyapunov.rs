//! Benettin QR estimates of the Lyapunov spectrum and the pullback
//! estimate of the unstable subspace.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::{orthonormalize, principal_angle, random_frame, DelaySystem};
use crate::error::{Error, Result};
use crate::linearize::{cauchy_tail, derivative_advance};
use crate::roughpath::DelayedRoughPath;
use crate::solve::Trajectory;

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovOptions {
    /// Number of exponents.
    pub k: usize,
    /// Segments after the initial one.
    pub n_steps: usize,
    /// Leading segments excluded from the averages.
    pub transient: usize,
    /// Segments between reorthonormalizations.
    pub reortho_every: usize,
    /// Cauchy-tail tolerance of the running estimates.
    pub tol: f64,
    /// Smallest log growth per segment; lower values are clamped.
    pub floor: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions { k: 1, n_steps: 200, transient: 20, reortho_every: 1, tol: 0.05, floor: 1e-14f64.ln() }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LyapunovReport {
    /// Exponents per unit time, largest first.
    pub exponents: Vec<f64>,
    /// `running[i][j]` is the estimate of exponent `i` after block `j`.
    pub running: Vec<Vec<f64>>,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_steps: usize,
    pub transient: usize,
    pub delay: f64,
    /// Floor per unit time; exponents at or below it stand for `−∞`.
    pub floor: f64,
    pub at_floor: Vec<bool>,
    pub tail: Vec<f64>,
    pub converged: bool,
}

/// Pushes the orthonormal frame `frame` living on segment `from` of
/// `traj` to segment `to`, reorthonormalizing every `every` segments.
/// `block` receives the segment index reached and the clamped log
/// growths of the block.
#[allow(clippy::too_many_arguments)]
pub(crate) fn evolve_frame(
    sys: &DelaySystem,
    rp: &DelayedRoughPath,
    traj: &Trajectory,
    mut frame: DMatrix<f64>,
    from: usize,
    to: usize,
    every: usize,
    floor: f64,
    mut block: impl FnMut(usize, &DVector<f64>),
) -> Result<DMatrix<f64>> {
    let basis = sys.basis();
    let every = every.max(1);
    let mut since = 0;
    for s in from + 1..=to {
        let past = &traj.segments[s - 1];
        let sol = &traj.segments[s];
        let cols: Vec<Result<DVector<f64>>> = (0..frame.ncols())
            .into_par_iter()
            .map(|i| {
                let dir = basis.decode(frame.column(i).as_slice(), past.start_node())?;
                let mut scratch = sys.vf.scratch();
                let out = derivative_advance(past, sol, &dir, rp, &sys.vf, &mut scratch)?;
                basis.encode(&out)
            })
            .collect();
        for (i, c) in cols.into_iter().enumerate() {
            frame.set_column(i, &c?);
        }
        since += 1;
        if since == every || s == to {
            let (q, diag) = orthonormalize(frame);
            frame = q;
            let lim = floor * since as f64;
            let logs = diag.map(|d| if d > 0.0 { d.ln().max(lim) } else { lim });
            block(s, &logs);
            since = 0;
        }
    }
    Ok(frame)
}

pub fn lyapunov_spectrum(sys: &DelaySystem, seed: u64, opts: &LyapunovOptions) -> Result<LyapunovReport> {
    let basis = sys.basis();
    if opts.k == 0 || opts.k > basis.dim() {
        return Err(Error::Config(format!("k must lie in [1, {}]", basis.dim())));
    }
    let every = opts.reortho_every.max(1);
    let transient = opts.transient.div_ceil(every) * every;
    if transient >= opts.n_steps {
        return Err(Error::Config("transient must be shorter than the run".into()));
    }
    let (rp, traj) = sys.base_orbit(seed, 0, opts.n_steps as i64)?;
    let frame = random_frame(basis.dim(), opts.k, seed);
    let mut sums = vec![0.0; opts.k];
    let mut running = vec![Vec::new(); opts.k];
    evolve_frame(sys, &rp, &traj, frame, 0, opts.n_steps, every, opts.floor, |s, logs| {
        if s <= transient {
            return;
        }
        let t = (s - transient) as f64 * sys.delay;
        for i in 0..opts.k {
            sums[i] += logs[i];
            running[i].push(sums[i] / t);
        }
    })?;
    let mut order: Vec<usize> = (0..opts.k).collect();
    let last = |i: usize| *running[i].last().unwrap_or(&f64::NEG_INFINITY);
    order.sort_by(|&a, &b| last(b).total_cmp(&last(a)));
    let running: Vec<Vec<f64>> = order.iter().map(|&i| running[i].clone()).collect();
    let exponents: Vec<f64> = running.iter().map(|r| *r.last().unwrap_or(&f64::NEG_INFINITY)).collect();
    let floor = opts.floor / sys.delay;
    let tail: Vec<f64> = running.iter().map(|r| cauchy_tail(r)).collect();
    Ok(LyapunovReport {
        at_floor: exponents.iter().map(|&e| e <= floor + 1e-9).collect(),
        converged: tail.iter().all(|&t| t < opts.tol),
        exponents,
        running,
        seed,
        n: sys.steps,
        n_steps: opts.n_steps,
        transient,
        delay: sys.delay,
        floor,
        tail,
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EnsembleReport {
    pub seeds: Vec<u64>,
    pub mean: Vec<f64>,
    /// Standard error of the mean across seeds.
    pub stderr: Vec<f64>,
    pub reports: Vec<LyapunovReport>,
}

/// Runs [`lyapunov_spectrum`] for every seed in parallel; results are
/// combined in seed order.
pub fn lyapunov_ensemble(sys: &DelaySystem, seeds: &[u64], opts: &LyapunovOptions) -> Result<EnsembleReport> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let reports: Vec<LyapunovReport> =
        seeds.par_iter().map(|&s| lyapunov_spectrum(sys, s, opts)).collect::<Result<_>>()?;
    let n = reports.len() as f64;
    let mut mean = vec![0.0; opts.k];
    let mut stderr = vec![0.0; opts.k];
    for i in 0..opts.k {
        let vals: Vec<f64> = reports.iter().map(|r| r.exponents[i]).collect();
        mean[i] = vals.iter().sum::<f64>() / n;
        if reports.len() > 1 {
            let var = vals.iter().map(|v| (v - mean[i]).powi(2)).sum::<f64>() / (n - 1.0);
            stderr[i] = (var / n).sqrt();
        }
    }
    Ok(EnsembleReport { seeds: seeds.to_vec(), mean, stderr, reports })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PullbackReport {
    pub k0: usize,
    pub depth: usize,
    pub seed: u64,
    /// Orthonormal basis coordinates at fiber 0, one vector per direction.
    pub basis: Vec<Vec<f64>>,
    /// Largest principal angle between the estimates from depth `n` and
    /// depth `2n`, in radians.
    pub angle: f64,
    /// Growth rates per unit time over the last `n` segments.
    pub exponents: Vec<f64>,
    pub tol: f64,
    /// Angle below `tol` and every exponent positive.
    pub converged: bool,
}

/// Frame pulled from segment `from` to `to` of `traj`, with the growth
/// rates per unit time over the second half of the push.
pub(crate) fn pullback_frame(
    sys: &DelaySystem,
    rp: &DelayedRoughPath,
    traj: &Trajectory,
    from: usize,
    to: usize,
    k0: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let half = from + (to - from) / 2;
    let mut sums = vec![0.0; k0];
    let frame = random_frame(sys.basis().dim(), k0, seed);
    let q = evolve_frame(sys, rp, traj, frame, from, to, 1, 1e-14f64.ln(), |s, logs| {
        if s > half {
            for i in 0..k0 {
                sums[i] += logs[i];
            }
        }
    })?;
    let t = (to - half) as f64 * sys.delay;
    Ok((q, sums.iter().map(|s| s / t).collect()))
}

/// Estimates the `k0`-dimensional unstable subspace at fiber 0 by pushing
/// random frames forward from fibers `−2n` and `−n`.
pub fn unstable_subspace_pullback(sys: &DelaySystem, seed: u64, n: usize, k0: usize, tol: f64) -> Result<PullbackReport> {
    let empty = PullbackReport {
        k0,
        depth: n,
        seed,
        basis: vec![],
        angle: 0.0,
        exponents: vec![],
        tol,
        converged: true,
    };
    if k0 == 0 {
        return Ok(empty);
    }
    if n == 0 || k0 > sys.basis().dim() {
        return Err(Error::Config("pullback needs n ≥ 1 and k0 within the basis dimension".into()));
    }
    let (rp, traj) = sys.base_orbit(seed, -2 * n as i64, 0)?;
    let (deep, exponents) = pullback_frame(sys, &rp, &traj, 0, 2 * n, k0, seed)?;
    let (shallow, _) = pullback_frame(sys, &rp, &traj, n, 2 * n, k0, seed.wrapping_add(1))?;
    let angle = principal_angle(&deep, &shallow);
    Ok(PullbackReport {
        basis: deep.column_iter().map(|c| c.iter().copied().collect()).collect(),
        converged: angle < tol && exponents.iter().all(|&e| e > 0.0),
        angle,
        exponents,
        ..empty
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ergodic::NoiseKind;
    use crate::field::{LinearField, VectorFieldBundle};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    /// Real branch root of `λ e^{λ} = a` by Newton iteration.
    fn characteristic_root(a: f64) -> f64 {
        let mut l: f64 = 0.0;
        for _ in 0..100 {
            let f = l * l.exp() - a;
            l -= f / ((1.0 + l) * l.exp());
        }
        l
    }

    pub(crate) fn delay_system(a: f64, steps: usize) -> DelaySystem {
        let vf = VectorFieldBundle::new(Arc::new(LinearField::scalar(0.0, 0.0, 0.0)))
            .with_linear_drift(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, a))
            .unwrap();
        let mut sys = DelaySystem::new(vf, 1.0, steps).unwrap();
        sys.noise = NoiseKind::Zero;
        sys.refine = 2;
        sys
    }

    #[test]
    fn characteristic_oracle_values() {
        assert!((characteristic_root(-0.3) + 0.489402).abs() < 1e-6);
        assert!((characteristic_root(0.5) - 0.351734).abs() < 1e-6);
    }

    #[test]
    fn deterministic_delay_exponents() {
        for a in [-0.3, 0.5] {
            let sys = delay_system(a, 32);
            let opts = LyapunovOptions { k: 2, n_steps: 60, transient: 10, ..Default::default() };
            let rep = lyapunov_spectrum(&sys, 1, &opts).unwrap();
            let want = characteristic_root(a);
            assert!((rep.exponents[0] - want).abs() < 2e-2, "a={a}: {} vs {want}", rep.exponents[0]);
            assert!(rep.exponents[0] >= rep.exponents[1]);
            assert!(rep.converged);
        }
    }

    #[test]
    fn reorthonormalization_frequency_does_not_matter() {
        let sys = delay_system(-0.3, 16);
        let one = LyapunovOptions { k: 3, n_steps: 40, transient: 10, ..Default::default() };
        let two = LyapunovOptions { reortho_every: 2, ..one.clone() };
        let a = lyapunov_spectrum(&sys, 3, &one).unwrap();
        let b = lyapunov_spectrum(&sys, 3, &two).unwrap();
        for (x, y) in a.exponents.iter().zip(&b.exponents) {
            assert!((x - y).abs() < 1e-3, "{x} vs {y}");
        }
    }

    #[test]
    fn empty_pullback() {
        let sys = delay_system(0.5, 16);
        let rep = unstable_subspace_pullback(&sys, 1, 10, 0, 0.05).unwrap();
        assert!(rep.basis.is_empty());
    }

    #[test]
    fn stable_system_has_no_unstable_direction() {
        let sys = delay_system(-0.3, 16);
        let rep = unstable_subspace_pullback(&sys, 1, 10, 1, 0.05).unwrap();
        assert!(!rep.converged);
        assert!(rep.exponents[0] < 0.0);
    }
}
