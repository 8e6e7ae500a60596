//! Comparison solvers, written from scratch: iterative hard thresholding,
//! Lasso by cyclic coordinate descent, Relaxed Lasso and Forward Stepwise.
//!
//! All use the loss convention `||y - Fθ||² + penalty` without intercept.

use crate::datagen::{logspace, Dataset};
use crate::error::{invalid, Result};
use crate::linalg::{self, Matrix};
use crate::metrics;
use crate::Coefficient;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Iht,
    Lasso,
    RelaxedLasso,
    ForwardStepwise,
}

impl Method {
    /// Label used in benchmark output; these are reimplementations.
    pub fn label(&self) -> &'static str {
        match self {
            Method::Iht => "iht-reimpl",
            Method::Lasso => "lasso-reimpl",
            Method::RelaxedLasso => "relaxed-lasso-reimpl",
            Method::ForwardStepwise => "forward-stepwise-reimpl",
        }
    }
}

/// Hyperparameter grid each baseline is swept over before validation selection.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineGrid {
    pub lasso_lambdas: usize,
    /// Smallest λ as a fraction of λ_max.
    pub lambda_min_ratio: f64,
    pub relaxed_lambdas: usize,
    pub relax_values: usize,
    pub iht_max_k: usize,
    /// `None`: up to `min(n, p)` steps.
    pub stepwise_max_steps: Option<usize>,
}

impl Default for BaselineGrid {
    fn default() -> Self {
        Self {
            lasso_lambdas: 500,
            lambda_min_ratio: 1e-4,
            relaxed_lambdas: 10,
            relax_values: 50,
            iht_max_k: 150,
            stepwise_max_steps: None,
        }
    }
}

/// Keeps the `k` largest-magnitude entries (lowest index wins ties).
pub fn hard_threshold(x: &mut [f64], k: usize) {
    if k >= x.len() {
        return;
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    for &i in &idx[k..] {
        x[i] = 0.0;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IhtOptions {
    /// Gradient step; `None` means `1 / ||F||₂²`.
    pub step: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for IhtOptions {
    fn default() -> Self {
        Self { step: None, max_iters: 5000, tol: 1e-13 }
    }
}

/// `θ ← H_k(θ + μ Fᵀ(y - Fθ))`, halving `μ` whenever the least-squares loss
/// would increase.
pub fn iht(f: &Matrix, y: &[f64], k: usize, opts: &IhtOptions, start: Option<&[f64]>) -> Result<Coefficient> {
    let p = f.cols();
    if k > p {
        return Err(invalid(format!("sparsity {k} exceeds dimension {p}")));
    }
    if f.rows() != y.len() {
        return Err(invalid("y length differs from the number of rows"));
    }
    let mut theta = match start {
        Some(s) if s.len() == p => {
            let mut s = s.to_vec();
            hard_threshold(&mut s, k);
            s
        }
        _ => vec![0.0; p],
    };
    if k == 0 {
        return Ok(Coefficient::zeros(p));
    }
    let base = opts.step.unwrap_or_else(|| {
        let l = linalg::spectral_norm_sq(f, 300);
        if l > 0.0 { 1.0 / l } else { 1.0 }
    });
    let loss = |t: &[f64]| metrics::sq_error(t, f, y);
    let mut cur = loss(&theta);
    for _ in 0..opts.max_iters {
        let pred = linalg::matvec(f, &theta)?;
        let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let g = linalg::matvec_t(f, &r)?;
        let mut mu = base;
        let mut next;
        let mut next_loss;
        let mut tries = 0;
        loop {
            next = theta.iter().zip(&g).map(|(t, g)| t + mu * g).collect::<Vec<_>>();
            hard_threshold(&mut next, k);
            next_loss = loss(&next);
            if next_loss <= cur || tries >= 30 {
                break;
            }
            mu *= 0.5;
            tries += 1;
        }
        let scale = theta.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let moved = theta.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        theta = next;
        cur = next_loss;
        if moved <= opts.tol * scale {
            break;
        }
    }
    Ok(Coefficient::new(theta))
}

/// Smallest λ for which the Lasso solution is zero: `2 ||Fᵀy||∞`.
pub fn lasso_lambda_max(f: &Matrix, y: &[f64]) -> f64 {
    let g = linalg::matvec_t(f, y).expect("shapes agree");
    2.0 * g.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `n` log-spaced values from `λ_max` down to `ratio · λ_max`.
pub fn lambda_path(f: &Matrix, y: &[f64], n: usize, ratio: f64) -> Vec<f64> {
    let lmax = lasso_lambda_max(f, y);
    if lmax == 0.0 {
        return vec![0.0; n];
    }
    if n == 1 {
        return vec![lmax];
    }
    let mut v = logspace(lmax * ratio, lmax, n).expect("positive endpoints");
    v.reverse();
    v
}

#[derive(Clone, Debug)]
pub struct LassoFit {
    pub lambda: f64,
    pub coef: Coefficient,
    pub sweeps: usize,
    /// Largest coordinate-wise KKT violation at the returned point.
    pub kkt: f64,
}

/// Coordinate-wise KKT violation of `min ||y - Fθ||² + λ||θ||₁`.
pub fn kkt_violation(f: &Matrix, y: &[f64], theta: &[f64], lambda: f64) -> f64 {
    let pred = linalg::matvec(f, theta).expect("shapes agree");
    let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let g = linalg::matvec_t(f, &r).expect("shapes agree");
    kkt_from_corr(&g, theta, lambda)
}

fn kkt_from_corr(ftr: &[f64], theta: &[f64], lambda: f64) -> f64 {
    ftr.iter()
        .zip(theta)
        .map(|(g, t)| {
            let g2 = 2.0 * g;
            if *t == 0.0 {
                (g2.abs() - lambda).max(0.0)
            } else {
                (g2 - lambda * t.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

const MAX_SWEEPS: usize = 10_000;

/// Warm-started cyclic coordinate descent along a decreasing λ path. Each
/// solve stops once the KKT violation is below `max(1e-9, 1e-13 λ_max)` or
/// after `10⁴` sweeps.
pub fn lasso_path(f: &Matrix, y: &[f64], lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid("lambda path must be non-increasing"));
    }
    if f.rows() != y.len() {
        return Err(invalid("y length differs from the number of rows"));
    }
    let p = f.cols();
    let ft = f.transpose();
    let cn = f.col_sq_norms();
    let tol = 1e-9f64.max(1e-13 * lasso_lambda_max(f, y));
    let mut theta = vec![0.0; p];
    let mut fits = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let (sweeps, kkt) = cd_solve(f, &ft, &cn, y, lambda, &mut theta, tol);
        fits.push(LassoFit { lambda, coef: Coefficient::new(theta.clone()), sweeps, kkt });
    }
    Ok(fits)
}

fn residual(f: &Matrix, y: &[f64], theta: &[f64]) -> Vec<f64> {
    let pred = linalg::matvec(f, theta).expect("shapes agree");
    y.iter().zip(&pred).map(|(a, b)| a - b).collect()
}

fn cd_sweep(ft: &Matrix, cn: &[f64], lambda: f64, theta: &mut [f64], r: &mut [f64], coords: &[usize]) -> f64 {
    let mut max_change = 0.0f64;
    for &j in coords {
        let c = cn[j];
        if c == 0.0 {
            theta[j] = 0.0;
            continue;
        }
        let col = ft.row(j);
        let z = linalg::dot(col, r) + c * theta[j];
        let new = soft(z, lambda / 2.0) / c;
        let d = new - theta[j];
        if d != 0.0 {
            linalg::axpy(-d, col, r);
            theta[j] = new;
            max_change = max_change.max(d.abs() * c.sqrt());
        }
    }
    max_change
}

fn cd_solve(
    f: &Matrix,
    ft: &Matrix,
    cn: &[f64],
    y: &[f64],
    lambda: f64,
    theta: &mut [f64],
    tol: f64,
) -> (usize, f64) {
    let all: Vec<usize> = (0..theta.len()).collect();
    let mut r = residual(f, y, theta);
    let mut sweeps = 0;
    let mut kkt = f64::INFINITY;
    while sweeps < MAX_SWEEPS {
        cd_sweep(ft, cn, lambda, theta, &mut r, &all);
        sweeps += 1;
        // iterate on the current support until it settles
        let active: Vec<usize> = all.iter().copied().filter(|&j| theta[j] != 0.0).collect();
        for _ in 0..100 {
            if sweeps >= MAX_SWEEPS || active.is_empty() {
                break;
            }
            let ch = cd_sweep(ft, cn, lambda, theta, &mut r, &active);
            sweeps += 1;
            if ch <= 0.1 * tol {
                break;
            }
        }
        r = residual(f, y, theta);
        let g = linalg::matvec(ft, &r).expect("shapes agree");
        kkt = kkt_from_corr(&g, theta, lambda);
        if kkt <= tol {
            break;
        }
        if let Some(cand) = polish(f, y, lambda, theta) {
            let cr = residual(f, y, &cand);
            let cg = linalg::matvec(ft, &cr).expect("shapes agree");
            let ck = kkt_from_corr(&cg, &cand, lambda);
            if lasso_objective(f, y, lambda, &cand) <= lasso_objective(f, y, lambda, theta) {
                theta.copy_from_slice(&cand);
                r = cr;
                kkt = ck;
                if kkt <= tol {
                    break;
                }
            }
        }
    }
    (sweeps, kkt)
}

fn lasso_objective(f: &Matrix, y: &[f64], lambda: f64, theta: &[f64]) -> f64 {
    metrics::sq_error(theta, f, y) + lambda * theta.iter().map(|v| v.abs()).sum::<f64>()
}

/// Feature-sign search on the current support: solve the stationarity
/// equations `2F_Aᵀ(y - F_A θ_A) = λ sign(θ_A)`; when a sign flips, move to
/// the best point on the segment (checking every zero crossing), drop the
/// coordinates that reached zero and repeat. `None` if nothing changed.
fn polish(f: &Matrix, y: &[f64], lambda: f64, theta: &[f64]) -> Option<Vec<f64>> {
    let mut th = reduce_support(f, theta);
    for _ in 0..=theta.len() {
        let active: Vec<usize> = (0..th.len()).filter(|&j| th[j] != 0.0).collect();
        if active.is_empty() {
            break;
        }
        let fa = f.select_cols(&active);
        let gram = linalg::matmul_tn(&fa, &fa).ok()?;
        let mut rhs = linalg::matvec_t(&fa, y).ok()?;
        for (b, &j) in rhs.iter_mut().zip(&active) {
            *b -= 0.5 * lambda * th[j].signum();
        }
        let Ok(l) = linalg::cholesky(&gram) else {
            break;
        };
        let x = linalg::cholesky_solve(&l, &rhs);
        if x.iter().any(|v| !v.is_finite()) {
            break;
        }
        let cur: Vec<f64> = active.iter().map(|&j| th[j]).collect();
        if x.iter().zip(&cur).all(|(a, b)| a.signum() == b.signum()) {
            for (&j, v) in active.iter().zip(&x) {
                th[j] = *v;
            }
            break;
        }
        let eval = |t: f64| {
            let v: Vec<f64> = cur.iter().zip(&x).map(|(c, n)| c + t * (n - c)).collect();
            let obj = metrics::sq_error(&v, &fa, y) + lambda * v.iter().map(|a| a.abs()).sum::<f64>();
            (obj, v)
        };
        let mut crossings: Vec<(f64, usize)> = cur
            .iter()
            .zip(&x)
            .enumerate()
            .filter(|(_, (c, n))| n.signum() != c.signum())
            .map(|(i, (c, n))| (c / (c - n), i))
            .collect();
        crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut best_obj, mut best) = eval(1.0);
        for &(t, i) in &crossings {
            let (obj, mut v) = eval(t);
            v[i] = 0.0;
            if obj < best_obj {
                best_obj = obj;
                best = v;
            }
        }
        for (&j, v) in active.iter().zip(&best) {
            th[j] = *v;
        }
    }
    (th != theta).then_some(th)
}

/// While the active columns are linearly dependent, moves along a null
/// direction of `F_A` (fit unchanged, ℓ1 norm not increasing) until one
/// coordinate reaches zero.
fn reduce_support(f: &Matrix, theta: &[f64]) -> Vec<f64> {
    let mut theta = theta.to_vec();
    'outer: loop {
        let active: Vec<usize> = (0..theta.len()).filter(|&j| theta[j] != 0.0).collect();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for (k, &j) in active.iter().enumerate() {
            let col = f.column(j);
            let norm = linalg::sq_norm(&col).sqrt();
            let mut v = col.clone();
            for _ in 0..2 {
                for q in &basis {
                    let d = linalg::dot(q, &v);
                    linalg::axpy(-d, q, &mut v);
                }
            }
            let rest = linalg::sq_norm(&v).sqrt();
            if rest > 1e-10 * norm {
                v.iter_mut().for_each(|x| *x /= rest);
                basis.push(v);
                continue;
            }
            // F_j = F_prev c, so (c, -1) spans a null direction
            let (c, _) = linalg::least_squares_on(f, &col, &active[..k]);
            let mut dir: Vec<(usize, f64)> = active[..k].iter().copied().zip(c).collect();
            dir.push((j, -1.0));
            let slope: f64 = dir.iter().map(|(i, d)| theta[*i].signum() * d).sum();
            if slope > 0.0 {
                dir.iter_mut().for_each(|(_, d)| *d = -*d);
            }
            let hit = dir
                .iter()
                .filter(|(i, d)| *d != 0.0 && d.signum() != theta[*i].signum())
                .map(|(i, d)| (*i, -theta[*i] / d))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let Some((zero, t)) = hit else {
                break 'outer;
            };
            for (i, d) in &dir {
                theta[*i] += t * d;
            }
            theta[zero] = 0.0;
            continue 'outer;
        }
        break;
    }
    theta
}

/// Lasso at a single λ.
pub fn lasso(f: &Matrix, y: &[f64], lambda: f64) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(invalid("lambda must be non-negative"));
    }
    Ok(lasso_path(f, y, &[lambda])?.pop().expect("one fit"))
}

/// Least-squares refit on the support of `coef`; the flag reports a ridge fallback.
pub fn refit(f: &Matrix, y: &[f64], coef: &Coefficient) -> (Coefficient, bool) {
    let support = coef.active_set();
    let (x, ridged) = linalg::least_squares_on(f, y, &support);
    let mut out = vec![0.0; coef.len()];
    for (&i, v) in support.iter().zip(&x) {
        out[i] = *v;
    }
    (Coefficient::new(out), ridged)
}

/// `η θ_lasso + (1-η) θ_LS` where `θ_LS` is the refit on the Lasso support.
pub fn relaxed_blend(lasso: &Coefficient, ls: &Coefficient, eta: f64) -> Coefficient {
    Coefficient::new(
        lasso
            .values()
            .iter()
            .zip(ls.values())
            .map(|(a, b)| if *a == 0.0 { 0.0 } else { eta * a + (1.0 - eta) * b })
            .collect(),
    )
}

#[derive(Clone, Debug)]
pub struct RelaxedFit {
    pub coef: Coefficient,
    /// The restricted system needed a ridge.
    pub ridged: bool,
}

pub fn relaxed_lasso(f: &Matrix, y: &[f64], lambda: f64, eta: f64) -> Result<RelaxedFit> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid(format!("relax value must lie in [0, 1], got {eta}")));
    }
    let fit = lasso(f, y, lambda)?;
    let (ls, ridged) = refit(f, y, &fit.coef);
    Ok(RelaxedFit { coef: relaxed_blend(&fit.coef, &ls, eta), ridged })
}

/// Greedy selection of the column most correlated with the residual, with a
/// least-squares refit after every step via an incrementally grown QR
/// factorization. Entry `t` of the result is the coefficient after `t` steps.
pub fn forward_stepwise(f: &Matrix, y: &[f64], max_steps: usize) -> Result<Vec<Coefficient>> {
    let (n, p) = (f.rows(), f.cols());
    if max_steps > n.min(p) {
        return Err(invalid(format!("at most min(n, p) = {} steps", n.min(p))));
    }
    if y.len() != n {
        return Err(invalid("y length differs from the number of rows"));
    }
    let ft = f.transpose();
    let mut path = vec![Coefficient::zeros(p)];
    let mut active: Vec<usize> = Vec::new();
    let mut in_set = vec![false; p];
    let mut q: Vec<Vec<f64>> = Vec::new();
    // R stored by columns: r_cols[t] has t+1 entries.
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut qty: Vec<f64> = Vec::new();
    let mut resid = y.to_vec();
    for _ in 0..max_steps {
        let corr = linalg::matvec(&ft, &resid)?;
        let mut best: Option<usize> = None;
        for j in 0..p {
            if in_set[j] {
                continue;
            }
            if best.is_none_or(|b| corr[j].abs() > corr[b].abs()) {
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        let col = ft.row(j);
        let mut v = col.to_vec();
        let mut rcol = vec![0.0; q.len() + 1];
        for _ in 0..2 {
            for (t, qt) in q.iter().enumerate() {
                let c = linalg::dot(qt, &v);
                rcol[t] += c;
                linalg::axpy(-c, qt, &mut v);
            }
        }
        let nv = linalg::sq_norm(&v).sqrt();
        if !(nv > 1e-10 * linalg::sq_norm(col).sqrt()) {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        rcol[q.len()] = nv;
        let c = linalg::dot(&v, y);
        qty.push(c);
        linalg::axpy(-c, &v, &mut resid);
        q.push(v);
        r_cols.push(rcol);
        active.push(j);
        in_set[j] = true;
        // back substitution R x = Qᵀy
        let t = active.len();
        let mut x = qty.clone();
        for i in (0..t).rev() {
            let mut s = x[i];
            for (kk, xk) in x.iter().enumerate().take(t).skip(i + 1) {
                s -= r_cols[kk][i] * xk;
            }
            x[i] = s / r_cols[i][i];
        }
        let mut theta = vec![0.0; p];
        for (&i, v) in active.iter().zip(&x) {
            theta[i] = *v;
        }
        path.push(Coefficient::new(theta));
    }
    Ok(path)
}

/// Candidate with the lowest validation squared error; ties go to the
/// sparsest, then to the earliest.
pub fn select_baseline(candidates: &[Coefficient], val: &Dataset) -> Result<Coefficient> {
    if candidates.is_empty() {
        return Err(invalid("no candidates"));
    }
    let mut best = 0;
    let mut best_key = (metrics::sq_error(candidates[0].values(), &val.f, &val.y), candidates[0].nnz());
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let key = (metrics::sq_error(c.values(), &val.f, &val.y), c.nnz());
        if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
            best = i;
            best_key = key;
        }
    }
    Ok(candidates[best].clone())
}

/// All candidates a method produces over its grid.
pub fn candidates(method: Method, train: &Dataset, grid: &BaselineGrid) -> Result<Vec<Coefficient>> {
    let (f, y) = (&train.f, &train.y);
    match method {
        Method::Lasso => {
            let lambdas = lambda_path(f, y, grid.lasso_lambdas, grid.lambda_min_ratio);
            Ok(lasso_path(f, y, &lambdas)?.into_iter().map(|fit| fit.coef).collect())
        }
        Method::RelaxedLasso => {
            let lambdas = lambda_path(f, y, grid.relaxed_lambdas, grid.lambda_min_ratio);
            let etas: Vec<f64> = if grid.relax_values <= 1 {
                vec![1.0]
            } else {
                (0..grid.relax_values).map(|i| i as f64 / (grid.relax_values - 1) as f64).collect()
            };
            let mut out = Vec::with_capacity(lambdas.len() * etas.len());
            for fit in lasso_path(f, y, &lambdas)? {
                let (ls, _) = refit(f, y, &fit.coef);
                out.extend(etas.iter().map(|&e| relaxed_blend(&fit.coef, &ls, e)));
            }
            Ok(out)
        }
        Method::ForwardStepwise => {
            let steps = grid.stepwise_max_steps.unwrap_or(usize::MAX).min(f.rows().min(f.cols()));
            forward_stepwise(f, y, steps)
        }
        Method::Iht => {
            let opts = IhtOptions::default();
            let kmax = grid.iht_max_k.min(f.cols());
            let mut out = Vec::with_capacity(kmax + 1);
            let mut prev: Option<Coefficient> = None;
            for k in 0..=kmax {
                let c = iht(f, y, k, &opts, prev.as_ref().map(|c| c.values()))?;
                prev = Some(c.clone());
                out.push(c);
            }
            Ok(out)
        }
    }
}

/// Sweeps the method's grid and keeps the best candidate on validation data.
pub fn fit_selected(method: Method, train: &Dataset, val: &Dataset, grid: &BaselineGrid) -> Result<Coefficient> {
    select_baseline(&candidates(method, train, grid)?, val)
}
