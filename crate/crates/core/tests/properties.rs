use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roughdelay::controlled::DelayedControlledSegment;
use roughdelay::ergodic::{lyapunov_spectrum, DelaySystem, LyapunovOptions};
use roughdelay::field::{DiagonalField, ScalarMap, VectorFieldBundle};
use roughdelay::io::{parse_rough_path, rough_path_to_string};
use roughdelay::linearize::{derivative_segment, SegmentBasis};
use roughdelay::noise::sample_brownian;
use roughdelay::roughpath::{exponent_condition_lhs, lift, lift_ito, lift_stratonovich, validate_exponents, Convention};
use roughdelay::solve::{semiflow, solve_segment};

const H: f64 = 1.0 / 8.0;

fn sine_field(a: f64, b: f64, drift: f64) -> VectorFieldBundle {
    VectorFieldBundle::new(Arc::new(DiagonalField::scalar(ScalarMap::Sine { offset: 0.3, a, b })))
        .with_linear_drift(DMatrix::from_element(1, 1, drift), DMatrix::from_element(1, 1, 0.1))
        .unwrap()
}

fn random_segment(basis: &SegmentBasis, start: i64, seed: u64) -> DelayedControlledSegment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..basis.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    basis.decode(&v, start).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), dim in 1usize..4) {
        let a = sample_brownian(dim, -1.0, 2.0, 1.0 / 64.0, seed).unwrap();
        let b = sample_brownian(dim, -1.0, 2.0, 1.0 / 64.0, seed).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn chen_holds_on_random_triples(seed in any::<u64>(), dim in 1usize..4, strat in any::<bool>(), tseed in any::<u64>()) {
        let p = sample_brownian(dim, -1.0, 6.0, H / 16.0, seed).unwrap();
        let rp = if strat { lift_stratonovich(&p, H, 1.0, 0.45) } else { lift_ito(&p, H, 1.0, 0.45) }.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(tseed);
        let (lo, hi) = (rp.first_node(), rp.last_node());
        let triples: Vec<_> = (0..20)
            .map(|_| {
                let mut v = [rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
                v.sort_unstable();
                (v[0], v[1], v[2])
            })
            .collect();
        prop_assert!(rp.chen_residual(&triples) < 1e-10);
    }

    #[test]
    fn shifts_compose(seed in any::<u64>(), m in 0i64..3, n in 0i64..3) {
        let p = sample_brownian(2, -1.0, 8.0, 1.0 / 32.0, seed).unwrap();
        let twice = p.wiener_shift(m, 1.0).unwrap().wiener_shift(n, 1.0).unwrap();
        let once = p.wiener_shift(m + n, 1.0).unwrap();
        prop_assert_eq!(twice.values(), once.values());
        prop_assert_eq!(twice.t_start(), once.t_start());
    }

    #[test]
    fn stratonovich_shifts_adjacent_areas_by_half_step(seed in any::<u64>(), dim in 1usize..4) {
        let p = sample_brownian(dim, -1.0, 3.0, H / 8.0, seed).unwrap();
        let ito = lift_ito(&p, H, 1.0, 0.45).unwrap();
        let strat = lift_stratonovich(&p, H, 1.0, 0.45).unwrap();
        for node in ito.first_node()..ito.last_node() {
            let (a, b) = (ito.interval_area(node), strat.interval_area(node));
            for i in 0..dim {
                for j in 0..dim {
                    let want = if i == j { H / 2.0 } else { 0.0 };
                    prop_assert!((b[i * dim + j] - a[i * dim + j] - want).abs() < 1e-13);
                }
            }
            prop_assert_eq!(ito.interval_delayed_area(node), strat.interval_delayed_area(node));
        }
    }

    #[test]
    fn file_round_trip_is_exact(seed in any::<u64>(), dim in 1usize..3, strat in any::<bool>(), augment in any::<bool>()) {
        let p = sample_brownian(dim, -1.0, 2.0, H / 4.0, seed).unwrap();
        let conv = if strat { Convention::Stratonovich } else { Convention::Ito };
        let mut rp = lift(&p, H, 1.0, 0.45, conv).unwrap();
        if augment {
            rp = rp.augment_time().unwrap();
        }
        let text = rough_path_to_string(&rp);
        prop_assert_eq!(parse_rough_path(text.as_bytes()).unwrap(), rp);
    }

    #[test]
    fn semiflow_splits_anywhere(seed in any::<u64>(), split in 1usize..4, init in -1.0f64..1.0) {
        let p = sample_brownian(1, -1.0, 4.0, H / 8.0, seed).unwrap();
        let rp = lift_ito(&p, H, 1.0, 0.45).unwrap();
        let vf = sine_field(0.4, 0.3, -0.5);
        let xi = DelayedControlledSegment::constant(-8, 8, H, &[init], 1);
        let whole = semiflow(&xi, &rp, &vf, 4).unwrap();
        let head = semiflow(&xi, &rp, &vf, split).unwrap();
        let tail = semiflow(head.last(), &rp, &vf, 4 - split).unwrap();
        prop_assert_eq!(&whole.segments[split..], &tail.segments[..]);
    }

    #[test]
    fn derivative_is_linear(seed in any::<u64>(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let p = sample_brownian(1, -1.0, 2.0, H / 8.0, seed).unwrap();
        let rp = lift_ito(&p, H, 1.0, 0.45).unwrap();
        let vf = sine_field(0.5, -0.4, -0.2);
        let basis = SegmentBasis::for_field(&vf, 8, H);
        let xi = random_segment(&basis, -8, seed);
        let (u, v) = (random_segment(&basis, -8, seed ^ 1), random_segment(&basis, -8, seed ^ 2));
        let y = solve_segment(&xi, &rp, &vf).unwrap();
        let push = |d: &DelayedControlledSegment| basis.encode(&derivative_segment(&xi, &y, d, &rp, &vf).unwrap()).unwrap();
        let combo = basis.encode(&u).unwrap() * s + basis.encode(&v).unwrap() * t;
        let lhs = push(&basis.decode(combo.as_slice(), -8).unwrap());
        let rhs = push(&u) * s + push(&v) * t;
        prop_assert!((lhs - rhs).amax() < 1e-11);
    }

    #[test]
    fn basis_round_trip(seed in any::<u64>(), start in -20i64..20) {
        let basis = SegmentBasis::new(8, 2, 3, H);
        let seg = random_segment(&basis, start, seed);
        let v = basis.encode(&seg).unwrap();
        prop_assert_eq!(basis.decode(v.as_slice(), start).unwrap(), seg);
    }

    #[test]
    fn exponent_check_matches_its_definition(a in 0.3f64..0.5, b in 0.3f64..0.5, g in 0.3f64..0.5) {
        let ordered = 1.0 / 3.0 < a && a < b && b < g && g < 0.5;
        let want = ordered && (1.0 - a) * (0.5 - b) / ((1.0 - b) * (1.0 - 2.0 * a)) < b - a;
        prop_assert_eq!(validate_exponents(a, b, g), want);
        if ordered {
            prop_assert!(exponent_condition_lhs(a, b) >= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lyapunov_exponents_are_sorted(seed in any::<u64>()) {
        let vf = sine_field(0.6, 0.4, -0.3);
        let mut sys = DelaySystem::new(vf, 1.0, 8).unwrap();
        sys.refine = 8;
        let opts = LyapunovOptions { k: 3, n_steps: 20, transient: 2, ..Default::default() };
        let rep = lyapunov_spectrum(&sys, seed, &opts).unwrap();
        prop_assert!(rep.exponents.windows(2).all(|w| w[0] >= w[1]), "{:?}", rep.exponents);
        prop_assert_eq!(rep.running.len(), 3);
    }
}
