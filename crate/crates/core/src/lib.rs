//! Sparse linear regression via exact gradient pruning.
//!
//! The central piece is [`egp`], which minimizes the closed-form expectation
//! of the Bernoulli-gated least-squares objective by clipped gradient descent
//! over many hyperparameter columns at once. Around it sit the comparison
//! solvers in [`baselines`], the score-function estimators in [`montecarlo`],
//! synthetic problem generation in [`datagen`] and evaluation in [`metrics`].

pub mod baselines;
pub mod datagen;
pub mod egp;
mod error;
pub mod linalg;
pub mod metrics;
pub mod montecarlo;
pub mod selection;

pub use error::{Error, Result};
pub use linalg::{Matrix, Rng};

/// A dense coefficient vector together with its active set.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficient {
    theta: Vec<f64>,
}

impl Coefficient {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    pub fn zeros(p: usize) -> Self {
        Self { theta: vec![0.0; p] }
    }

    pub fn values(&self) -> &[f64] {
        &self.theta
    }

    pub fn into_values(self) -> Vec<f64> {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Indices of exactly non-zero entries, ascending.
    pub fn active_set(&self) -> Vec<usize> {
        self.theta
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.theta.iter().filter(|v| **v != 0.0).count()
    }
}
