//! Score-function gradient estimators for the Bernoulli-relaxed ℓ0 problem
//! `min_γ E_{z∼π_γ}[g(z)]`, used as a convergence reference for EGP.

use std::time::Instant;

use crate::datagen::Dataset;
use crate::egp::Optimizer;
use crate::error::{invalid, Result};
use crate::linalg::{self, Matrix, Rng};
use crate::metrics;
use crate::Coefficient;

const GAMMA_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// REINFORCE with a leave-one-out baseline.
    ReinforceLoo,
    /// Single-coordinate finite difference of `g`.
    BitFlip1,
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::ReinforceLoo => "reinforce-loo",
            Estimator::BitFlip1 => "bitflip-1",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "reinforce-loo" => Ok(Estimator::ReinforceLoo),
            "bitflip-1" => Ok(Estimator::BitFlip1),
            other => Err(invalid(format!("unknown estimator {other:?}"))),
        }
    }

    pub fn default_samples(&self) -> usize {
        match self {
            Estimator::ReinforceLoo => 2,
            Estimator::BitFlip1 => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct McState {
    pub gamma: Vec<f64>,
    /// Weights from the most recent inner regression.
    pub w: Vec<f64>,
    pub estimator: Estimator,
    pub samples: usize,
    /// Inner least-squares solves so far.
    pub solves: usize,
}

impl McState {
    pub fn new(gamma: Vec<f64>, estimator: Estimator, samples: usize) -> Result<Self> {
        if gamma.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(invalid("gamma must lie in [0, 1]"));
        }
        let p = gamma.len();
        Ok(Self { gamma, w: vec![0.0; p], estimator, samples, solves: 0 })
    }
}

/// Independent Bernoulli draws with `P(z_i = 1) = γ_i`.
pub fn sample_z(gamma: &[f64], rng: &mut Rng) -> Vec<bool> {
    gamma.iter().map(|&g| rng.bernoulli(g.clamp(0.0, 1.0))).collect()
}

/// `g(z) = min_w ||y - F(w∘z)||² + λ Σ z_i`, with the regression solved exactly
/// on the support of `z`. Returns the value and the full-length minimizer.
pub fn inner_solution(f: &Matrix, y: &[f64], z: &[bool], lambda: f64) -> (f64, Vec<f64>) {
    let support: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
    let mut w = vec![0.0; z.len()];
    if support.is_empty() {
        return (linalg::sq_norm(y), w);
    }
    let (x, _) = linalg::least_squares_on(f, y, &support);
    for (&i, v) in support.iter().zip(&x) {
        w[i] = *v;
    }
    (metrics::sq_error(&w, f, y) + lambda * support.len() as f64, w)
}

pub fn inner_objective(f: &Matrix, y: &[f64], z: &[bool], lambda: f64) -> f64 {
    inner_solution(f, y, z, lambda).0
}

/// REINFORCE estimate of `∇_γ E[g(z)]` with a leave-one-out baseline over
/// `state.samples` draws; `γ` is clipped into `[1e-6, 1 - 1e-6]` first.
pub fn reinforce_grad(state: &mut McState, f: &Matrix, y: &[f64], lambda: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let s = state.samples;
    if s < 2 {
        return Err(invalid("the leave-one-out baseline needs at least two samples"));
    }
    let gamma: Vec<f64> = state.gamma.iter().map(|g| g.clamp(GAMMA_FLOOR, 1.0 - GAMMA_FLOOR)).collect();
    let mut draws = Vec::with_capacity(s);
    let mut values = Vec::with_capacity(s);
    for _ in 0..s {
        let z = sample_z(&gamma, rng);
        let (v, w) = inner_solution(f, y, &z, lambda);
        state.solves += 1;
        state.w = w;
        values.push(v);
        draws.push(z);
    }
    let total: f64 = values.iter().sum();
    let mut grad = vec![0.0; gamma.len()];
    for (z, v) in draws.iter().zip(&values) {
        let adv = v - (total - v) / (s - 1) as f64;
        for ((g, &zi), &gi) in grad.iter_mut().zip(z).zip(&gamma) {
            let score = if zi { 1.0 / gi } else { -1.0 / (1.0 - gi) };
            *g += adv * score;
        }
    }
    grad.iter_mut().for_each(|g| *g /= s as f64);
    Ok(grad)
}

/// Draws `z ∼ π_γ` and a uniform coordinate `j`; the only non-zero entry of the
/// result is `g(z | z_j = 1) - g(z | z_j = 0)` at `j`.
pub fn bitflip_grad(state: &mut McState, f: &Matrix, y: &[f64], lambda: f64, rng: &mut Rng) -> Vec<f64> {
    let p = state.gamma.len();
    let mut grad = vec![0.0; p];
    if p == 0 {
        return grad;
    }
    let mut z = sample_z(&state.gamma, rng);
    let j = rng.below(p);
    z[j] = true;
    let (on, w) = inner_solution(f, y, &z, lambda);
    z[j] = false;
    let off = inner_objective(f, y, &z, lambda);
    state.solves += 2;
    state.w = w;
    grad[j] = on - off;
    grad
}

/// Exact `∇_γ E[g(z)]` by enumerating all `2^p` masks. Only for small `p`.
pub fn exact_gradient(f: &Matrix, y: &[f64], gamma: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let p = gamma.len();
    if p > 16 {
        return Err(invalid("enumeration is limited to p <= 16"));
    }
    let mut grad = vec![0.0; p];
    for mask in 0u32..(1 << p) {
        let z: Vec<bool> = (0..p).map(|i| mask >> i & 1 == 1).collect();
        let g = inner_objective(f, y, &z, lambda);
        for j in 0..p {
            // ∂/∂γ_j of Π_i π(z_i) is the product over i ≠ j times ±1
            let rest: f64 = (0..p)
                .filter(|&i| i != j)
                .map(|i| if z[i] { gamma[i] } else { 1.0 - gamma[i] })
                .product();
            grad[j] += g * if z[j] { rest } else { -rest };
        }
    }
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct McOptions {
    pub estimator: Estimator,
    pub epochs: usize,
    pub lr: f64,
    pub samples: usize,
    pub optimizer: Optimizer,
    pub gamma_init: f64,
}

impl McOptions {
    pub fn new(estimator: Estimator, epochs: usize, lr: f64) -> Self {
        Self {
            estimator,
            epochs,
            lr,
            samples: estimator.default_samples(),
            optimizer: Optimizer::adam(),
            gamma_init: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct McRun {
    pub coef: Coefficient,
    /// Raw ℓ0 loss of the rounded-and-refit iterate; the initial value
    /// followed by one entry per epoch.
    pub trace: Vec<f64>,
    pub wall_seconds: f64,
    pub state: McState,
}

/// Rounds `γ` and refits least squares on the resulting support.
pub fn extract(f: &Matrix, y: &[f64], gamma: &[f64], lambda: f64) -> (Coefficient, f64) {
    let z: Vec<bool> = gamma.iter().map(|g| *g >= 0.5).collect();
    let (v, w) = inner_solution(f, y, &z, lambda);
    (Coefficient::new(w), v)
}

/// One estimator step per epoch on `γ`, clipped to `[0, 1]` after each update.
pub fn mc_solve(ds: &Dataset, lambda: f64, opts: &McOptions, rng: &mut Rng) -> Result<McRun> {
    if !(opts.lr >= 0.0) || !(0.0..=1.0).contains(&opts.gamma_init) {
        return Err(invalid(format!("invalid Monte Carlo options {opts:?}")));
    }
    if opts.estimator == Estimator::ReinforceLoo && opts.samples < 2 {
        return Err(invalid("the leave-one-out baseline needs at least two samples"));
    }
    let start = Instant::now();
    let (f, y) = (&ds.f, &ds.y);
    let p = f.cols();
    let mut st = McState::new(vec![opts.gamma_init; p], opts.estimator, opts.samples)?;
    let (mut m, mut v) = (vec![0.0; p], vec![0.0; p]);
    let mut trace = Vec::with_capacity(opts.epochs + 1);
    trace.push(extract(f, y, &st.gamma, lambda).1);
    for t in 1..=opts.epochs {
        let grad = match opts.estimator {
            Estimator::ReinforceLoo => reinforce_grad(&mut st, f, y, lambda, rng)?,
            Estimator::BitFlip1 => bitflip_grad(&mut st, f, y, lambda, rng),
        };
        match opts.optimizer {
            Optimizer::Descent => {
                for (g, d) in st.gamma.iter_mut().zip(&grad) {
                    *g = (*g - opts.lr * d).clamp(0.0, 1.0);
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let (c1, c2) = (1.0 - beta1.powi(t as i32), 1.0 - beta2.powi(t as i32));
                for i in 0..p {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let upd = (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    st.gamma[i] = (st.gamma[i] - opts.lr * upd).clamp(0.0, 1.0);
                }
            }
        }
        trace.push(extract(f, y, &st.gamma, lambda).1);
    }
    let (coef, _) = extract(f, y, &st.gamma, lambda);
    Ok(McRun { coef, trace, wall_seconds: start.elapsed().as_secs_f64(), state: st })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_cs, CsSetting};

    fn tiny(seed: u64) -> Dataset {
        let set = CsSetting { n: 20, p: 3, s: 2, rho: 0.0, snr: 4.0 };
        generate_cs(&set, &mut Rng::new(seed, 0)).unwrap()
    }

    #[test]
    fn sample_z_extremes_and_rate() {
        let mut rng = Rng::new(1, 0);
        assert!(sample_z(&[1.0; 5], &mut rng).iter().all(|z| *z));
        assert!(sample_z(&[0.0; 5], &mut rng).iter().all(|z| !*z));
        let hits = (0..100_000).filter(|_| sample_z(&[0.5], &mut rng)[0]).count();
        let mean = hits as f64 / 1e5;
        assert!((0.49..=0.51).contains(&mean), "{mean}");
    }

    #[test]
    fn inner_objective_examples() {
        let mut ds = tiny(2);
        assert!((inner_objective(&ds.f, &ds.y, &[false; 3], 3.0) - linalg::sq_norm(&ds.y)).abs() < 1e-12);
        let lam = 1.7;
        let full = inner_objective(&ds.f, &ds.y, &[true; 3], lam);
        let (ls, _) = linalg::least_squares_on(&ds.f, &ds.y, &[0, 1, 2]);
        assert!((full - metrics::sq_error(&ls, &ds.f, &ds.y) - 3.0 * lam).abs() < 1e-9);
        ds.y = linalg::matvec(&ds.f, &ds.beta).unwrap();
        let v = inner_objective(&ds.f, &ds.y, &[true, true, false], lam);
        assert!((v - 2.0 * lam).abs() < 1e-9);
    }

    #[test]
    fn reinforce_needs_two_samples() {
        let ds = tiny(3);
        let mut st = McState::new(vec![0.5; 3], Estimator::ReinforceLoo, 1).unwrap();
        assert!(reinforce_grad(&mut st, &ds.f, &ds.y, 1.0, &mut Rng::new(3, 1)).is_err());
    }

    #[test]
    fn reinforce_constant_objective_has_zero_gradient() {
        // with y = 0 every z gives g = 0 when λ = 0
        let ds = tiny(4);
        let y = vec![0.0; 20];
        let mut st = McState::new(vec![0.3, 0.6, 0.9], Estimator::ReinforceLoo, 4).unwrap();
        let g = reinforce_grad(&mut st, &ds.f, &y, 0.0, &mut Rng::new(4, 1)).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bitflip_one_entry() {
        let ds = tiny(5);
        let mut st = McState::new(vec![0.5; 3], Estimator::BitFlip1, 1).unwrap();
        let mut rng = Rng::new(5, 1);
        for _ in 0..20 {
            let g = bitflip_grad(&mut st, &ds.f, &ds.y, 0.5, &mut rng);
            assert!(g.iter().filter(|v| **v != 0.0).count() <= 1);
        }
        assert_eq!(st.solves, 40);
    }

    #[test]
    fn mc_solve_is_deterministic_and_clipped() {
        let ds = tiny(6);
        for est in [Estimator::ReinforceLoo, Estimator::BitFlip1] {
            let opts = McOptions::new(est, 50, 0.05);
            let a = mc_solve(&ds, 1.0, &opts, &mut Rng::new(6, 2)).unwrap();
            let b = mc_solve(&ds, 1.0, &opts, &mut Rng::new(6, 2)).unwrap();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.trace.len(), 51);
            assert!(a.state.gamma.iter().all(|g| (0.0..=1.0).contains(g)));
        }
    }

    #[test]
    fn lambda_zero_keeps_informative_coordinates() {
        let set = CsSetting { n: 60, p: 4, s: 2, rho: 0.0, snr: 20.0 };
        let ds = generate_cs(&set, &mut Rng::new(7, 0)).unwrap();
        let opts = McOptions::new(Estimator::ReinforceLoo, 400, 0.05);
        let run = mc_solve(&ds, 0.0, &opts, &mut Rng::new(7, 1)).unwrap();
        assert!(run.state.gamma[0] > 0.9 && run.state.gamma[1] > 0.9, "{:?}", run.state.gamma);
    }
}
