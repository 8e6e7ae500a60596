use egp_core::datagen::{generate_cs, CsSetting};
use egp_core::egp::{self, EgpConfig, EgpState, Optimizer};
use egp_core::linalg::{Matrix, Rng};
use proptest::prelude::*;

fn random_state(f: &Matrix, k: usize, rng: &mut Rng) -> EgpState {
    let p = f.cols();
    let w = Matrix::from_vec(p, k, rng.gauss(p * k)).unwrap();
    let g = Matrix::from_fn(p, k, |_, _| 0.05 + 0.9 * rng.uniform());
    let l = |rng: &mut Rng| (0..k).map(|_| rng.uniform()).collect::<Vec<_>>();
    let (l0, l1, l2) = (l(rng), l(rng), l(rng));
    EgpState::new(f, w, g, l0, l1, l2, vec![0.01; k]).unwrap()
}

/// Central differences with step `h` on every coordinate of column 0.
fn finite_differences(f: &Matrix, y: &[f64], st: &EgpState, h: f64) -> (Vec<f64>, Vec<f64>) {
    let p = st.p();
    let eval = |s: &EgpState| egp::objective(f, y, s, 0).unwrap();
    let mut dw = vec![0.0; p];
    let mut dg = vec![0.0; p];
    for i in 0..p {
        let mut a = st.clone();
        let mut b = st.clone();
        a.w.set(i, 0, st.w.get(i, 0) + h);
        b.w.set(i, 0, st.w.get(i, 0) - h);
        dw[i] = (eval(&a) - eval(&b)) / (2.0 * h);
        let mut a = st.clone();
        let mut b = st.clone();
        a.gamma.set(i, 0, st.gamma.get(i, 0) + h);
        b.gamma.set(i, 0, st.gamma.get(i, 0) - h);
        dg[i] = (eval(&a) - eval(&b)) / (2.0 * h);
    }
    (dw, dg)
}

/// Relative error with a unit floor on the denominator.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = Rng::new(30, 0);
    for _ in 0..50 {
        let (n, p) = (5, 8);
        let f = Matrix::from_vec(n, p, rng.gauss(n * p)).unwrap();
        let y = rng.gauss(n);
        let st = random_state(&f, 1, &mut rng);
        let (gw, gg) = egp::gradient(&f, &y, &st, 0).unwrap();
        let (fw, fg) = finite_differences(&f, &y, &st, 1e-6);
        for i in 0..p {
            assert!(rel(gw[i], fw[i]) <= 1e-5, "w[{i}]: {} vs {}", gw[i], fw[i]);
            assert!(rel(gg[i], fg[i]) <= 1e-5, "γ[{i}]: {} vs {}", gg[i], fg[i]);
        }
    }
}

#[test]
fn gradient_vanishes_after_long_training() {
    let set = CsSetting { n: 40, p: 5, s: 2, rho: 0.0, snr: 10.0 };
    let ds = generate_cs(&set, &mut Rng::new(31, 0)).unwrap();
    let mut rng = Rng::new(31, 1);
    let w = Matrix::from_vec(5, 1, rng.gauss(5)).unwrap();
    let mut st = EgpState::new(&ds.f, w, Matrix::filled(5, 1, 1.0), vec![0.0], vec![0.0], vec![0.0], vec![0.002])
        .unwrap();
    let rows: Vec<usize> = (0..40).collect();
    for _ in 0..20_000 {
        egp::step(&ds.f, &ds.y, &mut st, Optimizer::Descent, &rows).unwrap();
    }
    let l = egp::objective(&ds.f, &ds.y, &st, 0).unwrap();
    let (gw, _) = egp::gradient(&ds.f, &ds.y, &st, 0).unwrap();
    let norm = gw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(norm <= 1e-6 * (1.0 + l), "{norm}");
}

#[test]
fn huge_penalty_selects_zero() {
    let set = CsSetting { n: 50, p: 6, s: 2, rho: 0.0, snr: 5.0 };
    let ds = generate_cs(&set, &mut Rng::new(32, 0)).unwrap();
    let big = egp_core::linalg::sq_norm(&ds.y) * 2.0;
    let cfg = EgpConfig::single(big, 0.0, 0.1);
    let (_, val) = egp_core::datagen::validation_split(&ds, 100, &mut Rng::new(32, 1));
    let sol = egp::solve(&ds, &val, &cfg, &mut Rng::new(32, 2)).unwrap();
    assert_eq!(sol.coef.nnz(), 0);
}

#[test]
fn one_dimensional_recovery() {
    let n = 30;
    let f = Matrix::from_fn(n, 1, |_, _| 0.5);
    let y = vec![1.5; n];
    let ds = egp_core::datagen::Dataset {
        f,
        y,
        beta: vec![3.0],
        cov: egp_core::datagen::Covariance::Identity,
        sigma2: 0.0,
        s: 1,
        snr: f64::INFINITY,
        seed: 0,
    };
    let empty = egp_core::datagen::Dataset { f: Matrix::zeros(0, 1), y: vec![], ..ds.clone() };
    let mut cfg = EgpConfig::single(1e-3, 0.0, 0.05);
    cfg.finetune = true;
    let sol = egp::solve(&ds, &empty, &cfg, &mut Rng::new(33, 0)).unwrap();
    assert_eq!(sol.coef.active_set(), vec![0]);
    assert!((sol.coef.values()[0] - 3.0).abs() < 1e-3, "{:?}", sol.coef);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn columns_are_independent(seed in any::<u64>(), col in 0usize..4, which in 0usize..6) {
        let mut rng = Rng::new(seed, 0);
        let f = Matrix::from_vec(7, 6, rng.gauss(42)).unwrap();
        let y = rng.gauss(7);
        let st = random_state(&f, 4, &mut rng);
        let (gw, gg) = egp::gradients(&f, &y, &st).unwrap();
        let mut other = st.clone();
        other.w.set(which, col, st.w.get(which, col) + 1.7);
        other.gamma.set(which, col, 0.5 * st.gamma.get(which, col));
        other.lambda0[col] += 3.0;
        let (hw, hg) = egp::gradients(&f, &y, &other).unwrap();
        for k in (0..4).filter(|k| *k != col) {
            prop_assert_eq!(gw.column(k), hw.column(k));
            prop_assert_eq!(gg.column(k), hg.column(k));
        }
    }

    #[test]
    fn gates_stay_feasible(seed in any::<u64>(), lr in 0.001f64..2.0, adam in any::<bool>()) {
        let mut rng = Rng::new(seed, 0);
        let f = Matrix::from_vec(8, 5, rng.gauss(40)).unwrap();
        let y = rng.gauss(8);
        let mut st = random_state(&f, 3, &mut rng);
        st.lr = vec![lr; 3];
        let opt = if adam { Optimizer::adam() } else { Optimizer::Descent };
        for t in 0..30 {
            let batch: Vec<usize> = if t % 2 == 0 { (0..8).collect() } else { vec![1, 4, 6] };
            egp::step(&f, &y, &mut st, opt, &batch).unwrap();
            prop_assert!(st.gamma.as_slice().iter().all(|g| (0.0..=1.0).contains(g)));
        }
    }
}
