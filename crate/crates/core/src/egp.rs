//! Exact gradient pruning.
//!
//! For Bernoulli gates `z ~ π_γ` the expected penalized least-squares loss has
//! the closed form
//!
//! ```text
//! ||y - F(w∘γ)||² + Σ_j ||F_j||² w_j² γ_j (1-γ_j) + Σ_j γ_j (λ0 + λ1|w_j| + λ2 w_j²)
//! ```
//!
//! so it can be minimized by plain gradient descent over `(w, γ)` with `γ`
//! clipped to `[0, 1]`. `K` independent hyperparameter columns are packed
//! into `p × K` matrices and updated together; the columns never interact.

use std::time::Instant;

use crate::error::{invalid, Result};
use crate::linalg::{self, Matrix, Rng};
use crate::metrics;
use crate::selection::{self, SelectionConfig};
use crate::{datagen::Dataset, Coefficient};

/// Parameter update rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Descent,
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// A penalty grid, either literal or relative to a data-dependent scale.
#[derive(Clone, Debug, PartialEq)]
pub enum Grid {
    Values(Vec<f64>),
    /// `count` log-spaced multiples of the scale between `lo` and `hi`,
    /// optionally preceded by zero.
    Relative { lo: f64, hi: f64, count: usize, include_zero: bool },
}

impl Grid {
    pub fn resolve(&self, scale: f64) -> Result<Vec<f64>> {
        let out = match self {
            Grid::Values(v) => v.clone(),
            Grid::Relative { lo, hi, count, include_zero } => {
                let mut out = Vec::with_capacity(count + 1);
                if *include_zero {
                    out.push(0.0);
                }
                let scale = if scale > 0.0 { scale } else { 1.0 };
                match count {
                    0 => {}
                    1 => out.push(hi * scale),
                    _ => out.extend(
                        crate::datagen::logspace(lo * scale, hi * scale, *count)?
                    ),
                }
                out
            }
        };
        if out.is_empty() || out.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid(format!("grid {self:?} resolves to {out:?}")));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EgpConfig {
    /// Relative grids scale with `max_j (F_jᵀy)² / ||F_j||²`.
    pub lambda0: Grid,
    /// Relative grids scale with `2 ||Fᵀy||∞`.
    pub lambda1: Grid,
    pub lambda2: f64,
    pub lr: Vec<f64>,
    /// Rows per update; `None` means full batch.
    pub batch_size: Option<usize>,
    pub min_epochs: usize,
    pub max_epochs: usize,
    pub check_interval: usize,
    /// Δ as a fraction of the monitored column's first-epoch loss.
    pub delta_rel: f64,
    pub eps_mask: f64,
    pub finetune: bool,
    /// Finetuning step sizes as fractions of `1 / (2 ||F_S||²)`.
    pub finetune_lr: Vec<f64>,
    pub gamma_init: f64,
    pub w_init_scale: f64,
    pub optimizer: Optimizer,
    pub selection: SelectionConfig,
    /// Record a per-epoch loss trace (see [`EgpSolution::trace`]).
    pub record_trace: bool,
}

impl Default for EgpConfig {
    /// 33 λ0 × 5 λ1 × 3 learning rates = 495 columns, refined selection,
    /// finetuning on.
    fn default() -> Self {
        Self {
            lambda0: Grid::Relative { lo: 1e-6, hi: 1.0, count: 33, include_zero: false },
            lambda1: Grid::Relative { lo: 1e-5, hi: 1e-2, count: 4, include_zero: true },
            lambda2: 0.0,
            lr: vec![0.1, 0.01, 0.001],
            batch_size: None,
            min_epochs: 10,
            max_epochs: 10_000,
            check_interval: 10,
            delta_rel: 1e-6,
            eps_mask: 0.05,
            finetune: true,
            finetune_lr: vec![1.0, 0.5, 0.1],
            gamma_init: 1.0,
            w_init_scale: 0.1,
            optimizer: Optimizer::adam(),
            selection: SelectionConfig::default(),
            record_trace: false,
        }
    }
}

impl EgpConfig {
    /// A single column with fixed penalties, plain argmin selection and no
    /// finetuning.
    pub fn single(lambda0: f64, lambda1: f64, lr: f64) -> Self {
        Self {
            lambda0: Grid::Values(vec![lambda0]),
            lambda1: Grid::Values(vec![lambda1]),
            lr: vec![lr],
            finetune: false,
            selection: SelectionConfig::argmin(),
            ..Self::default()
        }
    }

    /// ℓ0 only: 165 λ0 values × 3 learning rates.
    pub fn l0_only() -> Self {
        Self {
            lambda0: Grid::Relative { lo: 1e-6, hi: 1.0, count: 165, include_zero: false },
            lambda1: Grid::Values(vec![0.0]),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr.is_empty() || self.lr.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("learning-rate grid must be non-empty and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.gamma_init) {
            return Err(invalid("gamma_init must lie in [0, 1]"));
        }
        if self.check_interval == 0 || self.max_epochs < self.min_epochs {
            return Err(invalid("inconsistent epoch limits"));
        }
        if self.batch_size == Some(0) {
            return Err(invalid("batch size must be positive"));
        }
        if !(self.lambda2 >= 0.0) {
            return Err(invalid("lambda2 must be non-negative"));
        }
        self.selection.validate()
    }
}

/// Data-dependent scales for relative penalty grids: the largest single-column
/// RSS reduction (ℓ0 scale) and `2 ||Fᵀy||∞` (ℓ1 scale).
pub fn penalty_scales(f: &Matrix, y: &[f64]) -> (f64, f64) {
    let fty = linalg::matvec_t(f, y).expect("shapes agree");
    let cn = f.col_sq_norms();
    let l0 = fty
        .iter()
        .zip(&cn)
        .filter(|(_, c)| **c > 0.0)
        .map(|(g, c)| g * g / c)
        .fold(0.0, f64::max);
    let l1 = 2.0 * fty.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (l0, l1)
}

/// The solver's mutable state; column `k` of every matrix is one independent run.
#[derive(Clone, Debug)]
pub struct EgpState {
    pub w: Matrix,
    pub gamma: Matrix,
    pub lambda0: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lr: Vec<f64>,
    /// `Σ_i F_ij²` over the full training set.
    pub colnorm: Vec<f64>,
    m_w: Matrix,
    v_w: Matrix,
    m_g: Matrix,
    v_g: Matrix,
    steps: u64,
    pub epoch: usize,
}

impl EgpState {
    /// State with explicit starting values; every column shares `colnorm`.
    pub fn new(
        f: &Matrix,
        w: Matrix,
        gamma: Matrix,
        lambda0: Vec<f64>,
        lambda1: Vec<f64>,
        lambda2: Vec<f64>,
        lr: Vec<f64>,
    ) -> Result<Self> {
        let (p, k) = (w.rows(), w.cols());
        if p != f.cols() || gamma.rows() != p || gamma.cols() != k {
            return Err(invalid("w and gamma must both be p×K"));
        }
        if [lambda0.len(), lambda1.len(), lambda2.len(), lr.len()].iter().any(|l| *l != k) {
            return Err(invalid("per-column vectors must have length K"));
        }
        if lambda0.iter().chain(&lambda1).chain(&lambda2).any(|l| !(*l >= 0.0)) {
            return Err(invalid("penalties must be non-negative"));
        }
        if gamma.as_slice().iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(invalid("gates must lie in [0, 1]"));
        }
        Ok(Self {
            m_w: Matrix::zeros(p, k),
            v_w: Matrix::zeros(p, k),
            m_g: Matrix::zeros(p, k),
            v_g: Matrix::zeros(p, k),
            colnorm: f.col_sq_norms(),
            w,
            gamma,
            lambda0,
            lambda1,
            lambda2,
            lr,
            steps: 0,
            epoch: 0,
        })
    }

    /// Lays the cross product of the grids over the columns (λ0 fastest,
    /// then λ1, then learning rate) with random `w` and constant `γ`.
    pub fn init(f: &Matrix, y: &[f64], cfg: &EgpConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (s0, s1) = penalty_scales(f, y);
        let l0 = cfg.lambda0.resolve(s0)?;
        let l1 = cfg.lambda1.resolve(s1)?;
        let k = l0.len() * l1.len() * cfg.lr.len();
        let (mut c0, mut c1, mut clr) = (Vec::new(), Vec::new(), Vec::new());
        for &lr in &cfg.lr {
            for &b in &l1 {
                for &a in &l0 {
                    c0.push(a);
                    c1.push(b);
                    clr.push(lr);
                }
            }
        }
        let p = f.cols();
        let w = Matrix::from_vec(p, k, rng.gauss(p * k))?;
        let w = Matrix::from_vec(
            p,
            k,
            w.into_vec().into_iter().map(|v| v * cfg.w_init_scale).collect(),
        )?;
        let gamma = Matrix::filled(p, k, cfg.gamma_init);
        Self::new(f, w, gamma, c0, c1, vec![cfg.lambda2; k], clr)
    }

    pub fn p(&self) -> usize {
        self.w.rows()
    }

    pub fn k(&self) -> usize {
        self.w.cols()
    }

    /// `w ∘ γ` for every column.
    pub fn theta(&self) -> Matrix {
        let data = self.w.as_slice().iter().zip(self.gamma.as_slice()).map(|(w, g)| w * g).collect();
        Matrix::from_vec(self.p(), self.k(), data).expect("same shape")
    }

    pub fn gamma_column(&self, k: usize) -> Vec<f64> {
        self.gamma.column(k)
    }

    pub fn w_column(&self, k: usize) -> Vec<f64> {
        self.w.column(k)
    }

    /// Expected ℓ0 norm `Σ_i γ_ik` of every column.
    pub fn expected_l0(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        for i in 0..self.p() {
            linalg::axpy(1.0, self.gamma.row(i), &mut out);
        }
        out
    }
}

/// Objective and gradients of every column on a set of rows.
struct Evaluation {
    objective: Vec<f64>,
    grad_w: Matrix,
    grad_g: Matrix,
}

/// Evaluates all columns on rows `f`, `y` with column norms `colnorm`, scaling
/// the data terms by `tau` (so a batch stands in for the full set).
fn evaluate(
    f: &Matrix,
    y: &[f64],
    colnorm: &[f64],
    tau: f64,
    st: &EgpState,
    with_grad: bool,
) -> Evaluation {
    let (p, k) = (st.p(), st.k());
    let theta = st.theta();
    let mut resid = linalg::matmul(f, &theta).expect("shapes agree");
    for (i, yi) in y.iter().enumerate() {
        for r in resid.row_mut(i) {
            *r = yi - *r;
        }
    }
    let mut objective = vec![0.0; k];
    for i in 0..resid.rows() {
        for (o, r) in objective.iter_mut().zip(resid.row(i)) {
            *o += r * r;
        }
    }
    let ft_r = if with_grad { Some(linalg::matmul_tn(f, &resid).expect("shapes agree")) } else { None };
    let mut var = vec![0.0; k];
    let mut pen = vec![0.0; k];
    let mut grad_w = Matrix::zeros(if with_grad { p } else { 0 }, k);
    let mut grad_g = Matrix::zeros(if with_grad { p } else { 0 }, k);
    for j in 0..p {
        let c = colnorm[j];
        let (wr, gr) = (st.w.row(j), st.gamma.row(j));
        for col in 0..k {
            let (w, g) = (wr[col], gr[col]);
            let (l0, l1, l2) = (st.lambda0[col], st.lambda1[col], st.lambda2[col]);
            var[col] += c * w * w * g * (1.0 - g);
            pen[col] += g * (l0 + l1 * w.abs() + l2 * w * w);
        }
        if let Some(ftr) = &ft_r {
            let fr = ftr.row(j);
            for col in 0..k {
                let (w, g) = (wr[col], gr[col]);
                let (l0, l1, l2) = (st.lambda0[col], st.lambda1[col], st.lambda2[col]);
                let sgn = if w > 0.0 {
                    1.0
                } else if w < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let dw = tau * (-2.0 * g * fr[col] + 2.0 * w * g * (1.0 - g) * c)
                    + g * (l1 * sgn + 2.0 * l2 * w);
                let dg = tau * (-2.0 * w * fr[col] + w * w * (1.0 - 2.0 * g) * c)
                    + (l0 + l1 * w.abs() + l2 * w * w);
                grad_w.set(j, col, dw);
                grad_g.set(j, col, dg);
            }
        }
    }
    for col in 0..k {
        objective[col] = tau * (objective[col] + var[col]) + pen[col];
    }
    Evaluation { objective, grad_w, grad_g }
}

fn check_shapes(f: &Matrix, y: &[f64], st: &EgpState) -> Result<()> {
    if f.rows() != y.len() || f.cols() != st.p() {
        return Err(invalid(format!(
            "F is {}x{}, y has {} entries, state has p = {}",
            f.rows(),
            f.cols(),
            y.len(),
            st.p()
        )));
    }
    Ok(())
}

/// Closed-form expected objective of column `k` on the full data.
pub fn objective(f: &Matrix, y: &[f64], st: &EgpState, k: usize) -> Result<f64> {
    Ok(objectives(f, y, st)?[k])
}

/// Closed-form expected objective of every column.
pub fn objectives(f: &Matrix, y: &[f64], st: &EgpState) -> Result<Vec<f64>> {
    check_shapes(f, y, st)?;
    Ok(evaluate(f, y, &st.colnorm, 1.0, st, false).objective)
}

/// Analytic gradients `(∂L/∂w_k, ∂L/∂γ_k)` of column `k`.
pub fn gradient(f: &Matrix, y: &[f64], st: &EgpState, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (gw, gg) = gradients(f, y, st)?;
    Ok((gw.column(k), gg.column(k)))
}

/// Analytic gradients of all columns as `p × K` matrices.
pub fn gradients(f: &Matrix, y: &[f64], st: &EgpState) -> Result<(Matrix, Matrix)> {
    check_shapes(f, y, st)?;
    let ev = evaluate(f, y, &st.colnorm, 1.0, st, true);
    Ok((ev.grad_w, ev.grad_g))
}

/// One optimizer update of every column using only the rows in `batch`,
/// followed by clipping `γ` to `[0, 1]`. Returns the per-column batch
/// objective before the update.
pub fn step(
    f: &Matrix,
    y: &[f64],
    st: &mut EgpState,
    optimizer: Optimizer,
    batch: &[usize],
) -> Result<Vec<f64>> {
    check_shapes(f, y, st)?;
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let ev = if batch.len() == f.rows() && batch.iter().enumerate().all(|(i, b)| i == *b) {
        evaluate(f, y, &st.colnorm, 1.0, st, true)
    } else {
        let fb = f.select_rows(batch);
        let yb: Vec<f64> = batch.iter().map(|&i| y[i]).collect();
        let cn = fb.col_sq_norms();
        evaluate(&fb, &yb, &cn, f.rows() as f64 / batch.len() as f64, st, true)
    };
    apply_update(st, optimizer, &ev.grad_w, &ev.grad_g);
    Ok(ev.objective)
}

fn apply_update(st: &mut EgpState, optimizer: Optimizer, gw: &Matrix, gg: &Matrix) {
    st.steps += 1;
    let k = st.k();
    match optimizer {
        Optimizer::Descent => {
            for (idx, (w, g)) in st.w.as_mut_slice().iter_mut().zip(gw.as_slice()).enumerate() {
                *w -= st.lr[idx % k] * g;
            }
            for (idx, (gm, g)) in st.gamma.as_mut_slice().iter_mut().zip(gg.as_slice()).enumerate() {
                *gm = (*gm - st.lr[idx % k] * g).clamp(0.0, 1.0);
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let t = st.steps as i32;
            let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
            let adam = |x: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], clip: bool| {
                for idx in 0..x.len() {
                    m[idx] = beta1 * m[idx] + (1.0 - beta1) * g[idx];
                    v[idx] = beta2 * v[idx] + (1.0 - beta2) * g[idx] * g[idx];
                    let upd = (m[idx] / c1) / ((v[idx] / c2).sqrt() + eps);
                    let nx = x[idx] - st.lr[idx % k] * upd;
                    x[idx] = if clip { nx.clamp(0.0, 1.0) } else { nx };
                }
            };
            adam(st.w.as_mut_slice(), st.m_w.as_mut_slice(), st.v_w.as_mut_slice(), gw.as_slice(), false);
            adam(
                st.gamma.as_mut_slice(),
                st.m_g.as_mut_slice(),
                st.v_g.as_mut_slice(),
                gg.as_slice(),
                true,
            );
        }
    }
}

/// Convergence test run every check interval once the minimum number of
/// epochs has passed.
///
/// `best` is the column with the lowest validation loss. Converged iff the
/// monitored loss of that column moved by at most `delta` between the last two
/// epochs and its gate column differs from the previous check's best gate
/// column by less than `eps_mask` everywhere.
pub fn check_convergence(
    best_gamma: &[f64],
    loss_now: f64,
    loss_prev: f64,
    prev_best_gamma: Option<&[f64]>,
    delta: f64,
    eps_mask: f64,
) -> bool {
    let Some(prev) = prev_best_gamma else { return false };
    if (loss_now - loss_prev).abs() > delta {
        return false;
    }
    prev.len() == best_gamma.len()
        && best_gamma.iter().zip(prev).all(|(a, b)| (a - b).abs() < eps_mask)
}

/// Index of the smallest value; ties go to the lowest index.
pub(crate) fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v < xs[best] {
            best = i;
        }
    }
    best
}

/// Unregularized least-squares descent on the active set of `theta`, stopped
/// at the first rise of the validation loss. Every step size in `lr_grid`
/// (a fraction of `1 / (2 ||F_S||²)`) is tried; the iterate with the lowest
/// validation loss wins. Without validation rows the training loss is used.
pub fn finetune(
    f: &Matrix,
    y: &[f64],
    val: &Dataset,
    theta: &Coefficient,
    lr_grid: &[f64],
) -> Coefficient {
    let support = theta.active_set();
    if support.is_empty() || lr_grid.is_empty() {
        return theta.clone();
    }
    let fs = f.select_cols(&support);
    let (fv, yv): (Matrix, &[f64]) = if val.n() > 0 {
        (val.f.select_cols(&support), &val.y)
    } else {
        (fs.clone(), y)
    };
    let lip = 2.0 * linalg::spectral_norm_sq(&fs, 200);
    if !(lip > 0.0) {
        return theta.clone();
    }
    let start: Vec<f64> = support.iter().map(|&i| theta.values()[i]).collect();
    let val_loss = |x: &[f64]| metrics::sq_error(x, &fv, yv);
    let mut best = (val_loss(&start), start.clone());
    for &frac in lr_grid {
        let eta = frac / lip;
        let mut x = start.clone();
        let mut prev = val_loss(&x);
        for _ in 0..20_000 {
            let pred = linalg::matvec(&fs, &x).expect("shapes agree");
            let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
            let g = linalg::matvec_t(&fs, &r).expect("shapes agree");
            let mut moved = 0.0f64;
            for (xi, gi) in x.iter_mut().zip(&g) {
                let d = 2.0 * eta * gi;
                *xi += d;
                moved = moved.max(d.abs());
            }
            let now = val_loss(&x);
            if now > prev {
                break;
            }
            if now < best.0 {
                best = (now, x.clone());
            }
            prev = now;
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if moved <= 1e-15 * scale {
                break;
            }
        }
    }
    let mut out = vec![0.0; theta.len()];
    for (&i, v) in support.iter().zip(&best.1) {
        out[i] = *v;
    }
    Coefficient::new(out)
}

/// Per-column summary after training.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnDiagnostics {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lr: f64,
    pub train_objective: f64,
    pub val_loss: f64,
    pub expected_l0: f64,
}

#[derive(Clone, Debug)]
pub struct EgpSolution {
    pub coef: Coefficient,
    pub columns: Vec<ColumnDiagnostics>,
    /// Epochs run until convergence was triggered (or the cap was hit).
    pub epochs: usize,
    pub converged: bool,
    pub wall_seconds: f64,
    /// With `record_trace`: entry `e` is the ℓ0-regularized training loss
    /// `||y - Fθ||² + λ0 ℓ0(θ)` of the hard-masked estimate of the column with
    /// the lowest training objective after `e` epochs (entry 0 is the
    /// initial state).
    pub trace: Vec<f64>,
    pub state: EgpState,
}

fn batch_size(cfg: &EgpConfig, n: usize) -> usize {
    match cfg.batch_size {
        Some(b) => b.min(n),
        None => n,
    }
}

fn trace_value(f: &Matrix, y: &[f64], st: &EgpState, objective: &[f64]) -> f64 {
    let k = argmin(objective);
    let theta = selection::masked_column(st, k);
    metrics::l0_loss(theta.values(), f, y, st.lambda0[k], false)
}

/// Trains every column until convergence, selects one coefficient and
/// optionally finetunes it.
pub fn solve(train: &Dataset, val: &Dataset, cfg: &EgpConfig, rng: &mut Rng) -> Result<EgpSolution> {
    let start = Instant::now();
    let (f, y) = (&train.f, &train.y);
    if val.n() > 0 && val.p() != train.p() {
        return Err(invalid("validation set has a different dimension"));
    }
    let mut st = EgpState::init(f, y, cfg, rng)?;
    let n = f.rows();
    let bs = batch_size(cfg, n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut trace = Vec::new();
    let mut prev_best: Option<Vec<f64>> = None;
    let mut converged = false;
    if cfg.record_trace {
        trace.push(trace_value(f, y, &st, &objectives(f, y, &st)?));
    }

    while st.epoch < cfg.max_epochs {
        if bs < n {
            rng.shuffle(&mut order);
        }
        let mut epoch_loss = vec![0.0; st.k()];
        let mut batches = 0usize;
        for chunk in order.chunks(bs) {
            let obj = step(f, y, &mut st, cfg.optimizer, chunk)?;
            linalg::axpy(1.0, &obj, &mut epoch_loss);
            batches += 1;
        }
        epoch_loss.iter_mut().for_each(|v| *v /= batches as f64);
        history.push(epoch_loss);
        if cfg.record_trace {
            trace.push(trace_value(f, y, &st, &objectives(f, y, &st)?));
        }
        st.epoch += 1;

        if st.epoch >= cfg.min_epochs && st.epoch % cfg.check_interval == 0 && history.len() >= 2 {
            let losses = monitored_losses(&st, val, history.last().unwrap());
            let best = argmin(&losses);
            let best_gamma = st.gamma_column(best);
            let now = history[history.len() - 1][best];
            let prev = history[history.len() - 2][best];
            let delta = cfg.delta_rel * history[0][best].abs();
            if check_convergence(&best_gamma, now, prev, prev_best.as_deref(), delta, cfg.eps_mask) {
                converged = true;
                break;
            }
            prev_best = Some(best_gamma);
        }
    }

    let final_obj = objectives(f, y, &st)?;
    let val_losses = monitored_losses(&st, val, &final_obj);
    let expected = st.expected_l0();
    let mut coef = selection::select(&st, &val_losses, &cfg.selection);
    if cfg.finetune {
        coef = finetune(f, y, val, &coef, &cfg.finetune_lr);
    }
    let columns = (0..st.k())
        .map(|k| ColumnDiagnostics {
            lambda0: st.lambda0[k],
            lambda1: st.lambda1[k],
            lr: st.lr[k],
            train_objective: final_obj[k],
            val_loss: val_losses[k],
            expected_l0: expected[k],
        })
        .collect();
    Ok(EgpSolution {
        coef,
        columns,
        epochs: st.epoch,
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
        trace,
        state: st,
    })
}

/// Validation losses when validation rows exist, training objectives otherwise.
fn monitored_losses(st: &EgpState, val: &Dataset, train_obj: &[f64]) -> Vec<f64> {
    if val.n() > 0 {
        selection::validation_losses(st, val)
    } else {
        train_obj.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_state(f: &Matrix, k: usize, rng: &mut Rng, lam: f64) -> EgpState {
        let p = f.cols();
        let w = Matrix::from_vec(p, k, rng.gauss(p * k)).unwrap();
        let g = Matrix::from_fn(p, k, |_, _| 0.1 + 0.8 * rng.uniform());
        EgpState::new(f, w, g, vec![lam; k], vec![0.3; k], vec![0.2; k], vec![0.01; k]).unwrap()
    }

    #[test]
    fn boundary_gates() {
        let mut rng = Rng::new(1, 0);
        let f = Matrix::from_vec(4, 6, rng.gauss(24)).unwrap();
        let y = rng.gauss(4);
        let w = Matrix::from_vec(6, 1, rng.gauss(6)).unwrap();
        let ones = EgpState::new(
            &f, w.clone(), Matrix::filled(6, 1, 1.0), vec![0.7], vec![0.0], vec![0.0], vec![0.1],
        )
        .unwrap();
        let fw = linalg::matvec(&f, &w.column(0)).unwrap();
        let rss: f64 = y.iter().zip(&fw).map(|(a, b)| (a - b).powi(2)).sum();
        assert!((objective(&f, &y, &ones, 0).unwrap() - (rss + 0.7 * 6.0)).abs() < 1e-12);
        let zeros = EgpState::new(
            &f, w, Matrix::zeros(6, 1), vec![0.7], vec![0.4], vec![0.2], vec![0.1],
        )
        .unwrap();
        assert!((objective(&f, &y, &zeros, 0).unwrap() - linalg::sq_norm(&y)).abs() < 1e-12);
    }

    #[test]
    fn gamma_gradient_at_zero_weights_is_lambda0() {
        let mut rng = Rng::new(2, 0);
        let f = Matrix::from_vec(5, 4, rng.gauss(20)).unwrap();
        let y = rng.gauss(5);
        let g = Matrix::from_fn(4, 1, |_, _| 0.2 + 0.6 * rng.uniform());
        let st = EgpState::new(&f, Matrix::zeros(4, 1), g, vec![1.25], vec![0.5], vec![0.3], vec![0.1])
            .unwrap();
        let (_, dg) = gradient(&f, &y, &st, 0).unwrap();
        assert!(dg.iter().all(|v| *v == 1.25));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut rng = Rng::new(3, 0);
        let f = Matrix::from_vec(6, 5, rng.gauss(30)).unwrap();
        let y = rng.gauss(6);
        let mut st = random_state(&f, 2, &mut rng, 0.5);
        st.lr = vec![0.0, 0.0];
        let (w0, g0) = (st.w.clone(), st.gamma.clone());
        step(&f, &y, &mut st, Optimizer::adam(), &[0, 1, 2, 3, 4, 5]).unwrap();
        step(&f, &y, &mut st, Optimizer::Descent, &[1, 3]).unwrap();
        assert_eq!((st.w, st.gamma), (w0, g0));
    }

    #[test]
    fn gates_are_clipped() {
        let mut rng = Rng::new(4, 0);
        let f = Matrix::from_vec(6, 5, rng.gauss(30)).unwrap();
        let y = rng.gauss(6);
        let mut st = random_state(&f, 3, &mut rng, 50.0);
        st.lr = vec![10.0; 3];
        let all: Vec<usize> = (0..6).collect();
        for _ in 0..5 {
            step(&f, &y, &mut st, Optimizer::Descent, &all).unwrap();
            assert!(st.gamma.as_slice().iter().all(|g| (0.0..=1.0).contains(g)));
        }
        // a huge λ0 pushes every gate to the lower boundary
        assert!(st.gamma.as_slice().iter().any(|g| *g == 0.0));
    }

    #[test]
    fn small_descent_step_decreases_objective() {
        let mut rng = Rng::new(5, 0);
        let f = Matrix::from_vec(8, 6, rng.gauss(48)).unwrap();
        let y = rng.gauss(8);
        let mut st = random_state(&f, 2, &mut rng, 0.4);
        st.lr = vec![1e-6; 2];
        let before = objectives(&f, &y, &st).unwrap();
        step(&f, &y, &mut st, Optimizer::Descent, &(0..8).collect::<Vec<_>>()).unwrap();
        let after = objectives(&f, &y, &st).unwrap();
        assert!(after.iter().zip(&before).all(|(a, b)| a < b));
    }

    #[test]
    fn columns_do_not_interact() {
        let mut rng = Rng::new(6, 0);
        let f = Matrix::from_vec(7, 5, rng.gauss(35)).unwrap();
        let y = rng.gauss(7);
        let st = random_state(&f, 4, &mut rng, 0.3);
        let (gw, gg) = gradients(&f, &y, &st).unwrap();
        let mut other = st.clone();
        for j in 0..5 {
            other.w.set(j, 2, 3.0 * rng.normal());
            other.gamma.set(j, 2, rng.uniform());
        }
        other.lambda0[2] = 9.0;
        let (gw2, gg2) = gradients(&f, &y, &other).unwrap();
        for col in [0, 1, 3] {
            assert_eq!(gw.column(col), gw2.column(col));
            assert_eq!(gg.column(col), gg2.column(col));
        }
    }

    #[test]
    fn convergence_rule() {
        let g = [0.0, 1.0, 0.98];
        assert!(check_convergence(&g, 1.0, 1.0, Some(&g), 1e-9, 0.05));
        assert!(!check_convergence(&g, 1.0, 1.0, None, 1e-9, 0.05));
        let swapped = [1.0, 0.0, 0.98];
        assert!(!check_convergence(&g, 1.0, 1.0, Some(&swapped), 1e-9, 0.05));
        assert!(!check_convergence(&g, 1.0, 1.5, Some(&g), 0.1, 0.05));
    }

    #[test]
    fn grids_resolve() {
        let g = Grid::Relative { lo: 1e-2, hi: 1.0, count: 3, include_zero: true };
        let v = g.resolve(10.0).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], 0.0);
        assert!((v[2] - 1.0).abs() < 1e-12 && (v[3] - 10.0).abs() < 1e-12);
        assert!(Grid::Values(vec![]).resolve(1.0).is_err());
        assert!(Grid::Values(vec![-1.0]).resolve(1.0).is_err());
    }

    #[test]
    fn init_lays_out_cross_product() {
        let mut rng = Rng::new(7, 0);
        let f = Matrix::from_vec(10, 4, rng.gauss(40)).unwrap();
        let y = rng.gauss(10);
        let cfg = EgpConfig {
            lambda0: Grid::Values(vec![1.0, 2.0]),
            lambda1: Grid::Values(vec![0.0, 0.5, 1.0]),
            lr: vec![0.1, 0.01],
            ..EgpConfig::default()
        };
        let st = EgpState::init(&f, &y, &cfg, &mut rng).unwrap();
        assert_eq!(st.k(), 12);
        assert_eq!(&st.lambda0[..3], &[1.0, 2.0, 1.0]);
        assert_eq!(st.lambda1[2], 0.5);
        assert_eq!(st.lr[6], 0.01);
        assert!(st.gamma.as_slice().iter().all(|g| *g == 1.0));
    }

    #[test]
    fn finetune_noop_on_empty_support() {
        let mut rng = Rng::new(8, 0);
        let f = Matrix::from_vec(10, 4, rng.gauss(40)).unwrap();
        let y = rng.gauss(10);
        let val = Dataset {
            f: Matrix::zeros(0, 4),
            y: vec![],
            beta: vec![0.0; 4],
            cov: crate::datagen::Covariance::Identity,
            sigma2: 1.0,
            s: 0,
            snr: 1.0,
            seed: 0,
        };
        let z = Coefficient::zeros(4);
        assert_eq!(finetune(&f, &y, &val, &z, &[1.0]), z);
    }
}
