#![allow(dead_code)]

use hysterelax::density::{AlphaProfile, DensityKind, DensityModel, DensityTable};
use hysterelax::MemoryCurve;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_inputs(rng: &mut StdRng, len: usize, amp: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-amp..amp)).collect()
}

pub fn curve_from(inputs: &[f64]) -> MemoryCurve {
    inputs
        .iter()
        .fold(MemoryCurve::virgin(), |c, &u| c.play_update(u).unwrap().0)
}

pub fn random_curve(rng: &mut StdRng, amp: f64) -> MemoryCurve {
    let n = rng.random_range(1..8);
    curve_from(&random_inputs(rng, n, amp))
}

pub fn pi_density() -> DensityModel {
    DensityModel::constant(1.0, 1.0).with_v_support(2.0)
}

pub fn gaussian_density() -> DensityModel {
    DensityModel::gaussian(1.0, 1.0, 3.0)
}

pub fn tabulated_density() -> DensityModel {
    let r = vec![0.0, 1.0, 2.5];
    let v = vec![-3.0, -1.0, 0.0, 1.5, 3.0];
    let values = vec![
        0.2, 0.8, 1.0, 0.7, 0.1, //
        0.3, 0.6, 0.9, 0.5, 0.2, //
        0.1, 0.2, 0.4, 0.3, 0.1,
    ];
    DensityModel {
        kind: DensityKind::Tabulated(DensityTable::new(r, v, values).unwrap()),
        alpha: AlphaProfile::Table(vec![(0.0, 1.0), (2.0, 0.5)]),
        gbar: 0.3,
        support_r: 2.5,
    }
}

pub fn densities() -> Vec<(&'static str, DensityModel)> {
    vec![
        ("pi", pi_density()),
        ("gaussian", gaussian_density()),
        ("tabulated", tabulated_density()),
    ]
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
pub fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}
