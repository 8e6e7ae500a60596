//! WebAssembly bindings for the demo page in `www/`. Each export returns a
//! JSON string; the plain functions behind them are usable natively.

use egp_core::datagen::{self, Dataset, McSetting};
use egp_core::egp::{self, EgpConfig, EgpState};
use egp_core::linalg::Matrix;
use egp_core::montecarlo::{self, Estimator, McOptions};
use egp_core::{baselines, metrics, Rng};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub active_set: Vec<usize>,
    pub rte: f64,
    pub asre: usize,
    pub re: f64,
    pub epochs: usize,
}

/// Generates a benchmark instance and fits one method to it.
pub fn solve_report(setting: &str, rho: f64, snr: f64, seed: u64, method: &str) -> Result<SolveReport, String> {
    let set = datagen::lookup_setting(setting, rho, snr).map_err(|e| e.to_string())?;
    let ds = datagen::generate_cs(&set, &mut Rng::new(seed, 0)).map_err(|e| e.to_string())?;
    let (train, val) = datagen::validation_split(&ds, 500, &mut Rng::new(seed, 1));
    let baseline = |m| baselines::fit_selected(m, &train, &val, &baselines::BaselineGrid::default()).map(|c| (c, 0));
    let (coef, epochs) = match method {
        "egp" => egp::solve(&train, &val, &EgpConfig::default(), &mut Rng::new(seed, 2)).map(|s| (s.coef, s.epochs)),
        "lasso" => baseline(baselines::Method::Lasso),
        "relaxed-lasso" => baseline(baselines::Method::RelaxedLasso),
        "forward-stepwise" => baseline(baselines::Method::ForwardStepwise),
        "iht" => baseline(baselines::Method::Iht),
        other => return Err(format!("unknown method {other:?}")),
    }
    .map_err(|e| e.to_string())?;
    let theta = coef.values().to_vec();
    Ok(SolveReport {
        method: method.to_string(),
        n: ds.n(),
        p: ds.p(),
        rte: metrics::rte(&theta, &ds.beta, &ds.cov, ds.sigma2).map_err(|e| e.to_string())?,
        asre: metrics::asre(&theta, &ds.beta),
        re: metrics::re(&theta, &ds.beta),
        active_set: coef.active_set(),
        beta: ds.beta,
        theta,
        epochs,
    })
}

#[derive(Debug, Serialize)]
pub struct ConvergenceReport {
    pub lambda: f64,
    pub egp: Vec<f64>,
    pub reinforce: Vec<f64>,
    pub bitflip: Vec<f64>,
}

/// ℓ0 loss per epoch on one M1 instance for EGP and both estimators.
pub fn convergence_report(epochs: usize, seed: u64) -> Result<ConvergenceReport, String> {
    let set = McSetting::M1;
    let ds = datagen::generate_mc(&set, &mut Rng::new(seed, 0)).map_err(|e| e.to_string())?;
    let empty = Dataset { f: Matrix::zeros(0, ds.p()), y: Vec::new(), ..ds.clone() };
    let mut cfg = EgpConfig::single(set.lambda, 0.0, 0.1);
    cfg.max_epochs = epochs;
    cfg.min_epochs = cfg.min_epochs.min(epochs);
    cfg.record_trace = true;
    let sol = egp::solve(&ds, &empty, &cfg, &mut Rng::new(seed, 1)).map_err(|e| e.to_string())?;
    let mc = |est: Estimator| {
        montecarlo::mc_solve(&ds, set.lambda, &McOptions::new(est, epochs, 0.03), &mut Rng::new(seed, 2))
            .map(|r| r.trace)
            .map_err(|e| e.to_string())
    };
    Ok(ConvergenceReport {
        lambda: set.lambda,
        egp: sol.trace,
        reinforce: mc(Estimator::ReinforceLoo)?,
        bitflip: mc(Estimator::BitFlip1)?,
    })
}

#[derive(Debug, Serialize)]
pub struct ExpectationReport {
    pub closed_form: f64,
    pub enumerated: f64,
    pub masks: usize,
}

/// Closed-form expected objective against the sum over all `2^p` masks.
pub fn expectation_report(n: usize, p: usize, seed: u64) -> Result<ExpectationReport, String> {
    if n == 0 || p == 0 || p > 16 {
        return Err("need n ≥ 1 and 1 ≤ p ≤ 16".into());
    }
    let mut rng = Rng::new(seed, 0);
    let f = Matrix::from_vec(n, p, rng.gauss(n * p)).map_err(|e| e.to_string())?;
    let y = rng.gauss(n);
    let w = rng.gauss(p);
    let gamma: Vec<f64> = (0..p).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
    let lambda0 = rng.uniform();
    let st = EgpState::new(
        &f,
        Matrix::from_vec(p, 1, w.clone()).map_err(|e| e.to_string())?,
        Matrix::from_vec(p, 1, gamma.clone()).map_err(|e| e.to_string())?,
        vec![lambda0],
        vec![0.0],
        vec![0.0],
        vec![0.0],
    )
    .map_err(|e| e.to_string())?;
    let closed_form = egp::objective(&f, &y, &st, 0).map_err(|e| e.to_string())?;
    let mut enumerated = 0.0;
    for mask in 0u32..(1 << p) {
        let on = |i: usize| mask >> i & 1 == 1;
        let prob: f64 = (0..p).map(|i| if on(i) { gamma[i] } else { 1.0 - gamma[i] }).product();
        let theta: Vec<f64> = (0..p).map(|i| if on(i) { w[i] } else { 0.0 }).collect();
        let k = mask.count_ones() as f64;
        enumerated += prob * (metrics::sq_error(&theta, &f, &y) + lambda0 * k);
    }
    Ok(ExpectationReport { closed_form, enumerated, masks: 1 << p })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve(setting: &str, rho: f64, snr: f64, seed: u32, method: &str) -> Result<String, JsValue> {
    to_js(solve_report(setting, rho, snr, u64::from(seed), method))
}

#[wasm_bindgen]
pub fn convergence(epochs: u32, seed: u32) -> Result<String, JsValue> {
    to_js(convergence_report(epochs as usize, u64::from(seed)))
}

#[wasm_bindgen]
pub fn expectation(n: u32, p: u32, seed: u32) -> Result<String, JsValue> {
    to_js(expectation_report(n as usize, p as usize, u64::from(seed)))
}
