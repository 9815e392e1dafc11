mod common;

use common::*;
use hysterelax::density::DensityModel;
use hysterelax::preisach::PreisachOperator;
use hysterelax::{Branch, MemoryCurve};
use proptest::prelude::*;
use rand::RngExt;

fn sup_r(a: &MemoryCurve, b: &MemoryCurve, f: impl Fn(f64, f64) -> bool) -> bool {
    let top = a.support_radius().max(b.support_radius()) + 0.5;
    (0..=200).all(|k| {
        let r = top * k as f64 / 200.0;
        f(a.eval(r).unwrap(), b.eval(r).unwrap())
    })
}

#[test]
fn energy_inequality_per_step() {
    for (name, d) in densities() {
        let op = PreisachOperator::new(d);
        let mut rng = rng(3);
        for _ in 0..100 {
            let mut c = MemoryCurve::virgin();
            let (mut g, mut e) = (op.output(&c), op.energy(&c));
            for u in random_inputs(&mut rng, 12, 2.5) {
                c = c.play_update(u).unwrap().0;
                let (g1, e1) = (op.output(&c), op.energy(&c));
                let slack = (g1 - g) * u - (e1 - e);
                assert!(slack >= -1e-10, "{name}: slack {slack}");
                g = g1;
                e = e1;
            }
        }
    }
}

#[test]
fn monotonicity_sandwich() {
    for (name, d) in densities() {
        let op = PreisachOperator::new(d);
        let mut rng = rng(5);
        for _ in 0..100 {
            let inputs = random_inputs(&mut rng, 10, 2.0);
            let umax = inputs.iter().fold(0.0f64, |m, u| m.max(u.abs()));
            let c_mono = op.monotonicity_constant(0.0, umax);
            let (gs, _) = op.apply_sequence(&MemoryCurve::virgin(), &inputs).unwrap();
            let mut prev = (0.0, op.output(&MemoryCurve::virgin()));
            for (&u, &g) in inputs.iter().zip(&gs) {
                let (du, dg) = (u - prev.0, g - prev.1);
                assert!(dg * dg / c_mono <= du * dg + 1e-12, "{name}: lower");
                assert!(du * dg <= c_mono * du * du + 1e-12, "{name}: upper");
                let bound = op.density.rho1() * umax * umax / 2.0;
                assert!((g - op.density.gbar).abs() <= bound + 1e-12, "{name}: output bound");
                prev = (u, g);
            }
        }
    }
}

#[test]
fn derivative_matches_central_differences() {
    for (name, d) in densities() {
        let op = PreisachOperator::new(d);
        let mut rng = rng(13);
        let h = 1e-6;
        for _ in 0..100 {
            let prev = random_curve(&mut rng, 2.0);
            let u = rng.random_range(-2.2..2.2);
            if (u - prev.input()).abs() < 2.0 * h {
                continue;
            }
            let fd = (op.nemytskii(&prev, u + h).unwrap() - op.nemytskii(&prev, u - h).unwrap()) / (2.0 * h);
            let exact = op.nemytskii_derivative(&prev, u).unwrap();
            assert!(exact >= 0.0);
            assert!((fd - exact).abs() <= 1e-6, "{name}: u = {u}, fd {fd} vs {exact}");
        }
    }
}

#[test]
fn ascending_derivative_jumps_up_at_wiped_corner() {
    for d in [DensityModel::constant(1.0, 3.0), gaussian_density()] {
        let op = PreisachOperator::new(d);
        let prev = curve_from(&[1.0, 0.3, 0.7, 0.5]);
        let eps = 1e-7;
        let left = op.nemytskii_derivative(&prev, 1.0 - eps).unwrap();
        let right = op.nemytskii_derivative(&prev, 1.0 + eps).unwrap();
        assert!(right > left + 0.1, "{left} -> {right}");
        let dl = (op.nemytskii(&prev, 1.0).unwrap() - op.nemytskii(&prev, 1.0 - 1e-4).unwrap()) / 1e-4;
        let dr = (op.nemytskii(&prev, 1.0 + 1e-4).unwrap() - op.nemytskii(&prev, 1.0).unwrap()) / 1e-4;
        assert!(dr > dl);
    }
}

#[test]
fn turning_point_derivative_vanishes_linearly() {
    let op = PreisachOperator::new(gaussian_density());
    let prev = curve_from(&[1.5, -0.4]);
    assert_eq!(op.nemytskii_derivative(&prev, -0.4).unwrap(), 0.0);
    let slopes: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&e| op.nemytskii_derivative(&prev, -0.4 + e).unwrap() / e)
        .collect();
    for s in &slopes {
        assert!(*s > 0.0 && (s / slopes[2] - 1.0).abs() < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hilpert_order_preservation(
        us in prop::collection::vec(-2.0f64..2.0, 1..10),
        gaps in prop::collection::vec(0.0f64..1.0, 10),
        which in 0usize..3,
    ) {
        let op = PreisachOperator::new(densities()[which].1.clone());
        let (mut a, mut b) = (MemoryCurve::virgin(), MemoryCurve::virgin());
        for (u, gap) in us.iter().zip(&gaps) {
            a = a.play_update(*u).unwrap().0;
            b = b.play_update(u + gap).unwrap().0;
            prop_assert!(sup_r(&a, &b, |x, y| x <= y + 1e-14));
            prop_assert!(op.output(&a) <= op.output(&b) + 1e-12);
        }
    }

    #[test]
    fn nemytskii_is_monotone(seq in prop::collection::vec(-2.0f64..2.0, 1..8), which in 0usize..3) {
        let op = PreisachOperator::new(densities()[which].1.clone());
        let prev = curve_from(&seq);
        let mut last = f64::NEG_INFINITY;
        for k in 0..=60 {
            let u = -3.0 + 6.0 * k as f64 / 60.0;
            let g = op.nemytskii(&prev, u).unwrap();
            prop_assert!(g >= last - 1e-13);
            last = g;
        }
        prop_assert_eq!(op.nemytskii(&prev, prev.input()).unwrap(), op.output(&prev));
    }

    #[test]
    fn branch_additivity(
        seq in prop::collection::vec(-2.0f64..2.0, 1..8),
        s1 in 0.0f64..1.0,
        s2 in 0.0f64..1.0,
        which in 0usize..3,
    ) {
        let op = PreisachOperator::new(densities()[which].1.clone());
        let prev = curve_from(&seq);
        let wi = prev.input() + s1;
        let w = wi + s2;
        let mid = prev.play_update(wi).unwrap().0;
        let lhs = op.branch(&prev, wi, Branch::Ascending).unwrap() + op.branch(&mid, w, Branch::Ascending).unwrap();
        let rhs = op.branch(&prev, w, Branch::Ascending).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{} vs {}", lhs, rhs);
        prop_assert!(op.branch(&prev, prev.input() - 0.1, Branch::Ascending).is_err());
    }

    #[test]
    fn increment_matches_output_difference(seq in prop::collection::vec(-2.0f64..2.0, 1..8), w in -2.5f64..2.5, which in 0usize..3) {
        let op = PreisachOperator::new(densities()[which].1.clone());
        let prev = curve_from(&seq);
        let direct = op.nemytskii(&prev, w).unwrap() - op.output(&prev);
        prop_assert!((op.increment(&prev, w).unwrap() - direct).abs() <= 1e-12);
    }

    #[test]
    fn return_point_memory(seq in prop::collection::vec(-2.0f64..2.0, 1..6), lo in -1.0f64..0.0, hi in 0.0f64..1.0, which in 0usize..3) {
        let op = PreisachOperator::new(densities()[which].1.clone());
        let start = curve_from(&seq).play_update(hi + 0.5).unwrap().0.play_update(lo).unwrap().0;
        let (gs, end) = op.apply_sequence(&start, &[hi, lo]).unwrap();
        prop_assert!(end.corners_match(&start, 1e-14));
        prop_assert!((gs[1] - op.output(&start)).abs() <= 1e-13);
    }
}
