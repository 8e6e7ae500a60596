//! Monte Carlo estimators against gradients obtained by enumerating every mask.

use egp_core::datagen::{generate_cs, CsSetting, Dataset};
use egp_core::linalg::Rng;
use egp_core::montecarlo::{self, Estimator, McState};

fn tiny(seed: u64, p: usize) -> Dataset {
    let set = CsSetting { n: 12, p, s: 2.min(p), rho: 0.0, snr: 3.0 };
    generate_cs(&set, &mut Rng::new(seed, 0)).unwrap()
}

/// `E[g(z)]` over all masks, written independently of the crate helper.
fn expected_g(ds: &Dataset, gamma: &[f64], lambda: f64) -> f64 {
    let p = gamma.len();
    (0u32..(1 << p))
        .map(|mask| {
            let z: Vec<bool> = (0..p).map(|i| mask >> i & 1 == 1).collect();
            let prob: f64 = (0..p).map(|i| if z[i] { gamma[i] } else { 1.0 - gamma[i] }).product();
            prob * montecarlo::inner_objective(&ds.f, &ds.y, &z, lambda)
        })
        .sum()
}

#[test]
fn enumerated_gradient_is_derivative_of_expectation() {
    // E[g] is multilinear in γ, so central differences are exact up to rounding
    let ds = tiny(40, 4);
    let gamma = [0.3, 0.55, 0.8, 0.1];
    let exact = montecarlo::exact_gradient(&ds.f, &ds.y, &gamma, 0.7).unwrap();
    for j in 0..4 {
        let mut a = gamma;
        let mut b = gamma;
        a[j] += 1e-4;
        b[j] -= 1e-4;
        let fd = (expected_g(&ds, &a, 0.7) - expected_g(&ds, &b, 0.7)) / 2e-4;
        assert!((fd - exact[j]).abs() <= 1e-7 * fd.abs().max(1.0));
    }
}

fn mean_and_se(draws: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = draws.len() as f64;
    let p = draws[0].len();
    let mean: Vec<f64> = (0..p).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / m).collect();
    let se = (0..p)
        .map(|j| {
            let var = draws.iter().map(|d| (d[j] - mean[j]).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        })
        .collect();
    (mean, se)
}

#[test]
fn reinforce_is_unbiased() {
    let ds = tiny(41, 3);
    let gamma = vec![0.35, 0.6, 0.8];
    let exact = montecarlo::exact_gradient(&ds.f, &ds.y, &gamma, 1.0).unwrap();
    let mut st = McState::new(gamma, Estimator::ReinforceLoo, 2).unwrap();
    let mut rng = Rng::new(41, 1);
    let draws: Vec<Vec<f64>> = (0..100_000)
        .map(|_| montecarlo::reinforce_grad(&mut st, &ds.f, &ds.y, 1.0, &mut rng).unwrap())
        .collect();
    let (mean, se) = mean_and_se(&draws);
    for j in 0..3 {
        assert!((mean[j] - exact[j]).abs() <= 3.0 * se[j], "{j}: {} vs {} (se {})", mean[j], exact[j], se[j]);
    }
    assert_eq!(st.solves, 200_000);
}

#[test]
fn bitflip_is_unbiased_up_to_one_over_p() {
    let ds = tiny(42, 3);
    let gamma = vec![0.25, 0.5, 0.9];
    let exact = montecarlo::exact_gradient(&ds.f, &ds.y, &gamma, 0.5).unwrap();
    let mut st = McState::new(gamma, Estimator::BitFlip1, 1).unwrap();
    let mut rng = Rng::new(42, 1);
    let draws: Vec<Vec<f64>> = (0..60_000)
        .map(|_| montecarlo::bitflip_grad(&mut st, &ds.f, &ds.y, 0.5, &mut rng))
        .collect();
    assert!(draws.iter().all(|d| d.iter().filter(|v| **v != 0.0).count() <= 1));
    let (mean, se) = mean_and_se(&draws);
    for j in 0..3 {
        let want = exact[j] / 3.0;
        assert!((mean[j] - want).abs() <= 3.0 * se[j], "{j}: {} vs {}", mean[j], want);
    }
}

#[test]
fn boundary_gates_inflate_reinforce_variance() {
    let ds = tiny(43, 3);
    let var = |gamma: Vec<f64>, seed: u64| {
        let mut st = McState::new(gamma, Estimator::ReinforceLoo, 2).unwrap();
        let mut rng = Rng::new(seed, 1);
        let d: Vec<f64> = (0..1000)
            .map(|_| montecarlo::reinforce_grad(&mut st, &ds.f, &ds.y, 1.0, &mut rng).unwrap()[0])
            .collect();
        assert!(d.iter().all(|v| v.is_finite()));
        let m = d.iter().sum::<f64>() / 1000.0;
        d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 999.0
    };
    let interior = var(vec![0.5, 0.5, 0.5], 1);
    let edge = var(vec![0.999, 0.5, 0.5], 2);
    assert!(edge > interior, "{edge} vs {interior}");
}

#[test]
fn irrelevant_coordinate_has_zero_mean_bitflip() {
    // a zero column never changes the fit, only the penalty; with λ = 0 the
    // difference is exactly zero
    let mut ds = tiny(44, 3);
    for i in 0..ds.n() {
        ds.f.set(i, 2, 0.0);
    }
    let mut st = McState::new(vec![0.5; 3], Estimator::BitFlip1, 1).unwrap();
    let mut rng = Rng::new(44, 1);
    for _ in 0..200 {
        let g = montecarlo::bitflip_grad(&mut st, &ds.f, &ds.y, 0.0, &mut rng);
        assert!(g[2].abs() < 1e-9);
    }
}
