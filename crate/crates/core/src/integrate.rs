//! Compensated Riemann sums for the delayed rough integral.

use serde::Serialize;

use crate::controlled::DelayedControlledSegment;
use crate::error::{Error, Result};
use crate::roughpath::{norm, DelayedRoughPath};

/// Adds the germ `m X + ζ⁰ : 𝕏 + ζ¹ : 𝕏(−r)` to `out`.
///
/// `m` is `w × k` row-major, the coefficients are `(w k) × k` and the
/// areas `k × k` with the integrand index first, so the `a`-th output is
/// `Σ_i m_{ai} X^i + Σ_{i,l} ζ⁰_{(a,i),l} 𝕏^{l i} + …`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn add_germ(
    w: usize,
    k: usize,
    m: &[f64],
    z0: &[f64],
    z1: Option<&[f64]>,
    x: &[f64],
    area: &[f64],
    delayed_area: &[f64],
    out: &mut [f64],
) {
    for a in 0..w {
        let mut acc = 0.0;
        for i in 0..k {
            let e = a * k + i;
            acc += m[e] * x[i];
            for l in 0..k {
                acc += z0[e * k + l] * area[l * k + i];
            }
            if let Some(z1) = z1 {
                for l in 0..k {
                    acc += z1[e * k + l] * delayed_area[l * k + i];
                }
            }
        }
        out[a] += acc;
    }
}

fn check_integrand(integrand: &DelayedControlledSegment, rp: &DelayedRoughPath, beta: f64) -> Result<usize> {
    let gamma = rp.gamma();
    if !(2.0 * beta + gamma > 1.0 && beta + 2.0 * gamma > 1.0) {
        return Err(Error::Config(format!(
            "integrand exponent β = {beta} with γ = {gamma} violates 2β + γ > 1, β + 2γ > 1"
        )));
    }
    let k = rp.dim();
    if integrand.noise_dim() != k || integrand.value_dim() % k != 0 {
        return Err(Error::Dimension(format!(
            "integrand must take values in L(ℝ^{k}, ℝ^w) and be controlled by the {k}-dimensional path"
        )));
    }
    if (integrand.step() - rp.step()).abs() > 1e-12 * rp.step() {
        return Err(Error::GridMismatch("integrand and rough path grids differ".into()));
    }
    Ok(integrand.value_dim() / k)
}

fn local_range(integrand: &DelayedControlledSegment, rp: &DelayedRoughPath, a: f64, b: f64) -> Result<(usize, usize)> {
    let (s, t) = rp.nodes_of_interval(a, b)?;
    rp.check_nodes(s, t)?;
    if s < integrand.start_node() || t > integrand.end_node() {
        return Err(Error::OutOfWindow(format!(
            "[{a}, {b}] is not inside the integrand's grid [{}, {}]",
            integrand.time(0),
            integrand.time(integrand.steps())
        )));
    }
    Ok(((s - integrand.start_node()) as usize, (t - integrand.start_node()) as usize))
}

/// `∫_a^· m d𝐗` on the nodes of `[a, b]`, starting from 0.
///
/// The output is a plain controlled path whose Gubinelli coefficient is
/// the integrand value `m`.
pub fn delayed_rough_integral(
    integrand: &DelayedControlledSegment,
    rp: &DelayedRoughPath,
    a: f64,
    b: f64,
    beta: f64,
) -> Result<DelayedControlledSegment> {
    let w = check_integrand(integrand, rp, beta)?;
    let k = rp.dim();
    let (s, t) = local_range(integrand, rp, a, b)?;
    let start = integrand.start_node();
    let mut values = vec![0.0; (t - s + 1) * w];
    let mut zeta0 = Vec::with_capacity((t - s + 1) * w * k);
    let mut acc = vec![0.0; w];
    let mut x = vec![0.0; k];
    for j in s..t {
        let node = start + j as i64;
        rp.increment_into(node, node + 1, &mut x);
        add_germ(
            w,
            k,
            integrand.value(j),
            integrand.zeta0(j),
            integrand.zeta1(j),
            &x,
            rp.interval_area(node),
            rp.interval_delayed_area(node),
            &mut acc,
        );
        values[(j - s + 1) * w..(j - s + 2) * w].copy_from_slice(&acc);
    }
    for j in s..=t {
        zeta0.extend_from_slice(integrand.value(j));
    }
    DelayedControlledSegment::new(start + s as i64, rp.step(), w, k, values, zeta0, None)
}

/// Compensated sums at successively coarser dyadic partitions.
#[derive(Clone, Debug, Serialize)]
pub struct SewingReport {
    /// Mesh of each level; level 0 is the rough path grid.
    pub mesh: Vec<f64>,
    pub sums: Vec<Vec<f64>>,
    /// `|S_level − S_0|`, zero for level 0.
    pub defects: Vec<f64>,
    /// Least-squares slope of `ln defect` against `ln mesh` over the
    /// levels with a nonzero defect.
    pub rate: Option<f64>,
}

/// Evaluates the compensated sum of `integrand` over `[a, b]` with meshes
/// `h, 2h, …, 2^{levels−1} h`, using Chen-reconstructed areas on the
/// coarse intervals.
pub fn sewing_defect(
    integrand: &DelayedControlledSegment,
    rp: &DelayedRoughPath,
    a: f64,
    b: f64,
    levels: usize,
    beta: f64,
) -> Result<SewingReport> {
    let w = check_integrand(integrand, rp, beta)?;
    let k = rp.dim();
    let (s, t) = local_range(integrand, rp, a, b)?;
    if levels == 0 || (t - s) % (1 << (levels - 1)) != 0 {
        return Err(Error::GridMismatch(format!(
            "{} intervals cannot be coarsened {} times dyadically",
            t - s,
            levels.saturating_sub(1)
        )));
    }
    let lag = rp.delay_steps() as i64;
    let start = integrand.start_node();
    let mut report = SewingReport { mesh: vec![], sums: vec![], defects: vec![], rate: None };
    let mut x = vec![0.0; k];
    for level in 0..levels {
        let stride = 1usize << level;
        let mut sum = vec![0.0; w];
        let mut j = s;
        while j < t {
            let (u, v) = (start + j as i64, start + (j + stride) as i64);
            rp.increment_into(u, v, &mut x);
            let area = rp.area(u, v);
            let delayed = rp.delayed_area(u, v);
            debug_assert!(u - lag >= rp.first_stored_node());
            add_germ(
                w,
                k,
                integrand.value(j),
                integrand.zeta0(j),
                integrand.zeta1(j),
                &x,
                &area,
                &delayed,
                &mut sum,
            );
            j += stride;
        }
        report.mesh.push(stride as f64 * rp.step());
        report.sums.push(sum);
    }
    let reference = report.sums[0].clone();
    let scale = norm(&reference).max(1.0);
    let mut pts = Vec::new();
    for (level, sum) in report.sums.iter().enumerate() {
        let diff: Vec<f64> = sum.iter().zip(&reference).map(|(p, q)| p - q).collect();
        let d = norm(&diff);
        report.defects.push(d);
        if level > 0 && d > 1e-13 * scale {
            pts.push((report.mesh[level].ln(), d.ln()));
        }
    }
    report.rate = ols_slope(&pts);
    Ok(report)
}

/// Least-squares slope through `(x, y)` pairs; `None` with fewer than two
/// distinct abscissae.
pub(crate) fn ols_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_brownian, SamplePath};
    use crate::roughpath::lift_ito;

    const H: f64 = 1.0 / 16.0;

    fn brownian(seed: u64) -> DelayedRoughPath {
        let p = sample_brownian(2, 0.0, 3.0, 1.0 / 512.0, seed).unwrap();
        lift_ito(&p, H, 1.0, 0.45).unwrap()
    }

    /// Integrand following component `c` of X (or its delayed copy) on
    /// nodes [start, start + 16]: `m^{(0,c)} = X^c`, the other entries zero.
    fn follow(rp: &DelayedRoughPath, start: i64, c: usize, delayed: bool) -> DelayedControlledSegment {
        let k = rp.dim();
        let lag = if delayed { rp.delay_steps() as i64 } else { 0 };
        let mut values = vec![0.0; 17 * k];
        let mut coeff = vec![0.0; 17 * k * k];
        for j in 0..17 {
            values[j * k + c] = rp.increment(start - lag, start + j as i64 - lag)[c];
            coeff[j * k * k + c * k + c] = 1.0;
        }
        let (z0, z1) = if delayed { (vec![0.0; coeff.len()], Some(coeff)) } else { (coeff, None) };
        DelayedControlledSegment::new(start, H, k, k, values, z0, z1).unwrap()
    }

    #[test]
    fn constant_integrand_gives_increment() {
        let rp = brownian(1);
        let c = [0.3, -1.2];
        let m = DelayedControlledSegment::constant(16, 16, H, &c, 2);
        let out = delayed_rough_integral(&m, &rp, 1.0, 2.0, 0.4).unwrap();
        let x = rp.increment(16, 32);
        let want = c[0] * x[0] + c[1] * x[1];
        assert!((out.last_value()[0] - want).abs() < 1e-13);
        assert_eq!(out.zeta0(3), &c);
    }

    #[test]
    fn following_integrands_give_areas() {
        let rp = brownian(2);
        for c in 0..2 {
            let out = delayed_rough_integral(&follow(&rp, 20, c, false), &rp, 20.0 * H, 36.0 * H, 0.4).unwrap();
            assert!((out.last_value()[0] - rp.area(20, 36)[c * 2 + c]).abs() < 1e-12);
            let out = delayed_rough_integral(&follow(&rp, 20, c, true), &rp, 20.0 * H, 36.0 * H, 0.4).unwrap();
            assert!((out.last_value()[0] - rp.delayed_area(20, 36)[c * 2 + c]).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_over_intervals() {
        let rp = brownian(3);
        let m = follow(&rp, 16, 1, false);
        let whole = delayed_rough_integral(&m, &rp, 1.0, 2.0, 0.4).unwrap();
        let left = delayed_rough_integral(&m, &rp, 1.0, 1.5, 0.4).unwrap();
        let right = delayed_rough_integral(&m, &rp, 1.5, 2.0, 0.4).unwrap();
        let sum = left.last_value()[0] + right.last_value()[0];
        assert!((whole.last_value()[0] - sum).abs() < 1e-14);
    }

    #[test]
    fn exponent_condition_enforced() {
        let rp = brownian(4);
        let m = DelayedControlledSegment::constant(16, 16, H, &[1.0, 1.0], 2);
        assert!(matches!(delayed_rough_integral(&m, &rp, 1.0, 2.0, 0.2), Err(Error::Config(_))));
    }

    #[test]
    fn sewing_defect_vanishes_for_smooth_linear_case() {
        let p = SamplePath::from_fn(1, 0.0, 3.0, 1.0 / 256.0, |t| vec![t]).unwrap();
        let rp = lift_ito(&p, H, 1.0, 0.45).unwrap();
        let m = follow(&rp, 16, 0, false);
        let rep = sewing_defect(&m, &rp, 1.0, 2.0, 4, 0.4).unwrap();
        assert!(rep.defects.iter().all(|&d| d < 1e-13));
        assert!(rep.rate.is_none());
        let c = DelayedControlledSegment::constant(16, 16, H, &[2.0], 1);
        let rep = sewing_defect(&c, &rp, 1.0, 2.0, 4, 0.4).unwrap();
        assert!(rep.sums.iter().all(|s| (s[0] - rep.sums[0][0]).abs() < 1e-14));
    }
}
