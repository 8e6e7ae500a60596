//! Evaluation quantities reported by the benchmarks.

use crate::datagen::Covariance;
use crate::error::{invalid, Result};
use crate::linalg::{self, Matrix};

/// Relative test error `((θ-β)ᵀΣ(θ-β) + σ²) / σ²`.
pub fn rte(theta: &[f64], beta: &[f64], cov: &Covariance, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(invalid(format!("rte needs a positive noise variance, got {sigma2}")));
    }
    if theta.len() != beta.len() {
        return Err(invalid("rte: length mismatch"));
    }
    let d: Vec<f64> = theta.iter().zip(beta).map(|(t, b)| t - b).collect();
    Ok((cov.quad_form(&d) + sigma2) / sigma2)
}

/// Same as [`rte`] with an explicit dense covariance.
pub fn rte_dense(theta: &[f64], beta: &[f64], sigma: &Matrix, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(invalid(format!("rte needs a positive noise variance, got {sigma2}")));
    }
    let d: Vec<f64> = theta.iter().zip(beta).map(|(t, b)| t - b).collect();
    let sd = linalg::matvec(sigma, &d)?;
    Ok((linalg::dot(&d, &sd) + sigma2) / sigma2)
}

/// Size of the symmetric difference of the supports. Entries of `theta` with
/// magnitude at most `tol` count as zero; `tol = 0` is the exact test.
pub fn asre_tol(theta: &[f64], beta: &[f64], tol: f64) -> usize {
    theta
        .iter()
        .zip(beta)
        .filter(|(t, b)| (**b != 0.0) != (t.abs() > tol))
        .count()
}

pub fn asre(theta: &[f64], beta: &[f64]) -> usize {
    asre_tol(theta, beta, 0.0)
}

/// Reconstruction error, the ℓ1 distance.
pub fn re(theta: &[f64], beta: &[f64]) -> f64 {
    theta.iter().zip(beta).map(|(t, b)| (t - b).abs()).sum()
}

/// `||y - Fθ||² (/ n if normalized) + λ ℓ0(θ)`.
pub fn l0_loss(theta: &[f64], f: &Matrix, y: &[f64], lambda: f64, normalized: bool) -> f64 {
    let pred = linalg::matvec(f, theta).expect("shapes agree");
    let rss: f64 = pred.iter().zip(y).map(|(p, y)| (y - p).powi(2)).sum();
    let rss = if normalized { rss / y.len().max(1) as f64 } else { rss };
    rss + lambda * theta.iter().filter(|t| **t != 0.0).count() as f64
}

/// Residual sum of squares on arbitrary data.
pub fn sq_error(theta: &[f64], f: &Matrix, y: &[f64]) -> f64 {
    l0_loss(theta, f, y, 0.0, false)
}

/// One row of benchmark output.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub method: String,
    pub setting: String,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub snr: f64,
    pub seed: u64,
    pub rte: f64,
    pub asre: usize,
    pub re: f64,
    pub loss_norm: f64,
    pub loss_raw: f64,
    pub epochs: usize,
    pub wall_seconds: f64,
    pub active_set_size: usize,
}
