//! Turning the `K` trained columns into a single coefficient vector.

use crate::datagen::Dataset;
use crate::egp::{argmin, EgpState};
use crate::error::{invalid, Result};
use crate::linalg;
use crate::Coefficient;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    /// Column with the lowest validation loss, hard-masked at `γ < 0.5`.
    Argmin,
    /// Softmax-weighted blend of all columns scored by sparsity and log loss.
    Refined,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionConfig {
    /// Weight of the expected ℓ0 norm in the score.
    pub alpha: f64,
    /// Inverse temperature of the softmax over scores.
    pub beta: f64,
    /// Added to the loss before taking the logarithm.
    pub eps_ln: f64,
    pub mode: SelectionMode,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { alpha: 0.001, beta: 50.0, eps_ln: 1e-12, mode: SelectionMode::Refined }
    }
}

impl SelectionConfig {
    pub fn argmin() -> Self {
        Self { mode: SelectionMode::Argmin, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !(self.eps_ln > 0.0) || !self.alpha.is_finite() {
            return Err(invalid(format!("invalid selection config {self:?}")));
        }
        Ok(())
    }
}

/// `𝓛_k = ||ȳ - F̄ (w_k ∘ γ_k)||²` on the validation rows.
pub fn validation_losses(st: &EgpState, val: &Dataset) -> Vec<f64> {
    let theta = st.theta();
    let pred = linalg::matmul(&val.f, &theta).expect("shapes agree");
    let mut out = vec![0.0; st.k()];
    for (i, yi) in val.y.iter().enumerate() {
        for (o, p) in out.iter_mut().zip(pred.row(i)) {
            *o += (yi - p) * (yi - p);
        }
    }
    out
}

/// `r_k = α s_k + ln(𝓛_k + ε)`, min-max normalized to `[0, 1]`; a constant
/// score vector maps to zeros.
pub fn scores(losses: &[f64], expected_l0: &[f64], cfg: &SelectionConfig) -> Vec<f64> {
    let raw: Vec<f64> = losses
        .iter()
        .zip(expected_l0)
        .map(|(l, s)| cfg.alpha * s + (l + cfg.eps_ln).ln())
        .collect();
    normalize(&raw)
}

/// Pre-normalization scores, exposed for inspection.
pub fn raw_scores(losses: &[f64], expected_l0: &[f64], cfg: &SelectionConfig) -> Vec<f64> {
    losses
        .iter()
        .zip(expected_l0)
        .map(|(l, s)| cfg.alpha * s + (l + cfg.eps_ln).ln())
        .collect()
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|r| (r - lo) / span).collect()
}

/// Softmax weights `c_k ∝ exp(-β r_k)`.
pub fn weights(r: &[f64], beta: f64) -> Vec<f64> {
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = r.iter().map(|v| (-beta * (v - lo)).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// Blends the columns: `m_i = round(Σ_k c_k γ_ik)` (half up) and
/// `θ_i = Σ_k c_k γ_ik w_ik` where `m_i = 1`, zero elsewhere.
pub fn combine(st: &EgpState, r: &[f64], cfg: &SelectionConfig) -> Coefficient {
    let c = weights(r, cfg.beta);
    let theta = (0..st.p())
        .map(|i| {
            let (g, w) = (st.gamma.row(i), st.w.row(i));
            let mask: f64 = c.iter().zip(g).map(|(c, g)| c * g).sum();
            if mask >= 0.5 {
                c.iter().zip(g).zip(w).map(|((c, g), w)| c * g * w).sum()
            } else {
                0.0
            }
        })
        .collect();
    Coefficient::new(theta)
}

/// `w_k ∘ γ_k` with entries where `γ_ik < 0.5` zeroed.
pub fn masked_column(st: &EgpState, k: usize) -> Coefficient {
    let theta = (0..st.p())
        .map(|i| {
            let g = st.gamma.get(i, k);
            if g < 0.5 {
                0.0
            } else {
                st.w.get(i, k) * g
            }
        })
        .collect();
    Coefficient::new(theta)
}

/// Column with the lowest loss (lowest index on ties), hard-masked.
pub fn select_argmin(st: &EgpState, losses: &[f64]) -> Coefficient {
    masked_column(st, argmin(losses))
}

pub fn select(st: &EgpState, losses: &[f64], cfg: &SelectionConfig) -> Coefficient {
    match cfg.mode {
        SelectionMode::Argmin => select_argmin(st, losses),
        SelectionMode::Refined => {
            let r = scores(losses, &st.expected_l0(), cfg);
            combine(st, &r, cfg)
        }
    }
}
