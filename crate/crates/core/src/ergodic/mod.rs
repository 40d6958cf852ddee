//! Long-run dynamics of the segment cocycle: Lyapunov spectra, the
//! unstable subspace, stationary trajectories and manifold probes.

mod lyapunov;
mod probes;
mod stationary;

pub use lyapunov::{
    lyapunov_ensemble, lyapunov_spectrum, unstable_subspace_pullback, EnsembleReport, LyapunovOptions,
    LyapunovReport, PullbackReport,
};
pub use probes::{
    stable_directions, stable_rate_probe, unstable_rate_probe, ProbeMode, ProbeReport,
};
pub use stationary::{
    contraction_condition, find_stationary, stationary_zero_check, ContractionCheck, StationaryOptions,
    StationaryTrajectory,
};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::controlled::DelayedControlledSegment;
use crate::error::{Error, Result};
use crate::field::VectorFieldBundle;
use crate::linearize::SegmentBasis;
use crate::noise::{sample_brownian, SamplePath};
use crate::roughpath::{lift, Convention, DelayedRoughPath};
use crate::solve::{semiflow_driven, Trajectory};

/// What drives the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Brownian,
    /// Identically zero noise: the equation reduces to a classical delay
    /// equation.
    Zero,
}

/// Everything needed to generate drivers and base orbits for a seed.
///
/// Fiber `s` is the segment on `[(s − 1) r, s r]`; fiber 0 is the initial
/// segment at `ω`.
#[derive(Clone, Debug)]
pub struct DelaySystem {
    pub vf: VectorFieldBundle,
    pub delay: f64,
    /// Coarse steps per delay.
    pub steps: usize,
    /// Fine steps per coarse step.
    pub refine: usize,
    pub gamma: f64,
    pub convention: Convention,
    pub noise: NoiseKind,
    /// Constant value of the initial segment.
    pub initial: Vec<f64>,
}

impl DelaySystem {
    pub fn new(vf: VectorFieldBundle, delay: f64, steps: usize) -> Result<Self> {
        if !(delay > 0.0) || steps == 0 {
            return Err(Error::Config("delay and steps per delay must be positive".into()));
        }
        let w = vf.state_dim();
        Ok(DelaySystem {
            vf,
            delay,
            steps,
            refine: 32,
            gamma: 0.45,
            convention: Convention::Ito,
            noise: NoiseKind::Brownian,
            initial: vec![1.0; w],
        })
    }

    pub fn step(&self) -> f64 {
        self.delay / self.steps as f64
    }

    pub fn basis(&self) -> SegmentBasis {
        SegmentBasis::for_field(&self.vf, self.steps, self.step())
    }

    /// Noise on `[(from − 1) r, to r]`.
    pub fn sample(&self, seed: u64, from: i64, to: i64) -> Result<SamplePath> {
        if to <= from {
            return Err(Error::OutOfWindow(format!("empty fiber range [{from}, {to}]")));
        }
        let h_f = self.step() / self.refine as f64;
        let (a, b) = ((from - 1) as f64 * self.delay, to as f64 * self.delay);
        let d = self.vf.noise_dim();
        match self.noise {
            NoiseKind::Brownian => sample_brownian(d, a, b, h_f, seed),
            NoiseKind::Zero => SamplePath::from_fn(d, a, b, h_f, |_| vec![0.0; d]),
        }
    }

    /// Driver of the effective field for fibers `from..=to`.
    pub fn driver(&self, seed: u64, from: i64, to: i64) -> Result<DelayedRoughPath> {
        let path = self.sample(seed, from, to)?;
        let rp = lift(&path, self.step(), self.delay, self.gamma, self.convention)?;
        Ok(self.vf.driver(&rp)?.into_owned())
    }

    /// Constant segment with value `value` at fiber `fiber`, expressed
    /// against the effective driver.
    pub fn constant_segment(&self, fiber: i64, value: &[f64]) -> DelayedControlledSegment {
        let start = (fiber - 1) * self.steps as i64;
        DelayedControlledSegment::constant(start, self.steps, self.step(), value, self.vf.driver_dim())
    }

    /// Orbit of the initial segment from fiber `from` to fiber `to`.
    pub fn base_orbit(&self, seed: u64, from: i64, to: i64) -> Result<(DelayedRoughPath, Trajectory)> {
        let xi = self.constant_segment(from, &self.initial);
        self.orbit_of(seed, &xi, to)
    }

    /// Orbit of `xi` (which must sit on a fiber) up to fiber `to`, with the
    /// driver it was computed with.
    pub fn orbit_of(&self, seed: u64, xi: &DelayedControlledSegment, to: i64) -> Result<(DelayedRoughPath, Trajectory)> {
        let n = self.steps as i64;
        if xi.steps() != self.steps || xi.end_node() % n != 0 {
            return Err(Error::GridMismatch("segment does not sit on a fiber".into()));
        }
        let from = xi.end_node() / n;
        let rp = self.driver(seed, from, to)?;
        let traj = semiflow_driven(xi, &rp, &self.vf, (to - from) as usize)?;
        Ok((rp, traj))
    }
}

/// `k` random unit vectors, orthonormal in the basis coordinates.
pub(crate) fn random_frame(dim: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f4a3_e000_0001);
    let raw = DMatrix::from_fn(dim, k, |_, _| StandardNormal.sample(&mut rng));
    orthonormalize(raw).0
}

/// Thin QR with the diagonal of `R` made nonnegative.
pub(crate) fn orthonormalize(m: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let k = m.ncols();
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = DVector::zeros(k);
    for i in 0..k {
        let d = r[(i, i)];
        if d < 0.0 {
            q.column_mut(i).neg_mut();
        }
        diag[i] = d.abs();
    }
    (q, diag)
}

/// Largest principal angle between the column spans of two orthonormal
/// frames.
pub(crate) fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return 0.0;
    }
    let s = (a.transpose() * b).singular_values();
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    smin.clamp(-1.0, 1.0).acos()
}
