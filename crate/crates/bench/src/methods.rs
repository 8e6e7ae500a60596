//! Method identifiers and a uniform way to run any of them on one cell.

use std::fmt;
use std::time::Instant;

use egp_core::baselines::{self, BaselineGrid, Method};
use egp_core::datagen::Dataset;
use egp_core::egp::{self, EgpConfig};
use egp_core::{Coefficient, Rng};

use crate::config::SimConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodId {
    /// ℓ0 + ℓ1 grid, refined selection, finetuning.
    Egp,
    /// ℓ0-only grid of the same size.
    EgpL0,
    Baseline(Method),
}

impl MethodId {
    pub const ALL: [MethodId; 6] = [
        MethodId::Egp,
        MethodId::EgpL0,
        MethodId::Baseline(Method::Lasso),
        MethodId::Baseline(Method::RelaxedLasso),
        MethodId::Baseline(Method::ForwardStepwise),
        MethodId::Baseline(Method::Iht),
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MethodId::Egp => "egp",
            MethodId::EgpL0 => "egp-l0",
            MethodId::Baseline(m) => m.label(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Hyperparameters for every method, resolved from a [`SimConfig`].
#[derive(Clone, Debug)]
pub struct MethodParams {
    pub egp: EgpConfig,
    pub egp_l0: EgpConfig,
    pub grid: BaselineGrid,
}

impl MethodParams {
    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        Ok(Self {
            egp: cfg.egp.apply(EgpConfig::default())?,
            egp_l0: cfg.egp.apply(EgpConfig::l0_only())?,
            grid: cfg.baselines.grid(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub coef: Coefficient,
    /// Training epochs for EGP; zero for the closed-form and path methods.
    pub epochs: usize,
    pub wall_seconds: f64,
}

pub fn run(id: MethodId, train: &Dataset, val: &Dataset, params: &MethodParams, rng: &mut Rng) -> Result<Outcome> {
    let start = Instant::now();
    let (coef, epochs) = match id {
        MethodId::Egp => {
            let sol = egp::solve(train, val, &params.egp, rng)?;
            (sol.coef, sol.epochs)
        }
        MethodId::EgpL0 => {
            let sol = egp::solve(train, val, &params.egp_l0, rng)?;
            (sol.coef, sol.epochs)
        }
        MethodId::Baseline(m) => (baselines::fit_selected(m, train, val, &params.grid)?, 0),
    };
    Ok(Outcome { coef, epochs, wall_seconds: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for m in MethodId::ALL {
            assert_eq!(MethodId::parse(m.label()).unwrap(), m);
        }
        assert!(MethodId::parse("lasso").is_err());
        assert!(MethodId::ALL.iter().skip(2).all(|m| m.label().ends_with("-reimpl")));
    }
}
