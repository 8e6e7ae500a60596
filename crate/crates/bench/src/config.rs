//! TOML run description. Every field has a default, so an empty file is a
//! valid config; command-line flags override the file.

use std::path::Path;

use egp_core::baselines::BaselineGrid;
use egp_core::datagen::{self, CsSetting};
use egp_core::egp::{EgpConfig, Grid, Optimizer};
use egp_core::selection::SelectionMode;
use serde::Deserialize;

use crate::error::{io_err, Error, Result};
use crate::methods::MethodId;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Master seed; every cell derives its own seed from it.
    pub seed: u64,
    pub replications: usize,
    pub methods: Vec<String>,
    pub validation_rows: usize,
    /// λ used for the reported ℓ0 losses of sweep rows.
    pub loss_lambda: f64,
    pub settings: Vec<SettingSpec>,
    pub egp: EgpOverrides,
    pub baselines: BaselineOverrides,
    pub mc: McConfig,
    pub scaling: ScalingConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            replications: 10,
            methods: ["egp", "lasso-reimpl", "relaxed-lasso-reimpl", "forward-stepwise-reimpl", "iht-reimpl"]
                .map(String::from)
                .to_vec(),
            validation_rows: 500,
            loss_lambda: 0.0,
            settings: vec![SettingSpec::default()],
            egp: EgpOverrides::default(),
            baselines: BaselineOverrides::default(),
            mc: McConfig::default(),
            scaling: ScalingConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SettingSpec {
    /// One of S1..S4, or a free label when `n`, `p` and `s` are all given.
    pub name: String,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub s: Option<usize>,
    pub rho: Vec<f64>,
    pub snr: SnrSpec,
}

impl Default for SettingSpec {
    fn default() -> Self {
        Self { name: "S1".into(), n: None, p: None, s: None, rho: vec![0.0], snr: SnrSpec::default() }
    }
}

impl SettingSpec {
    pub fn resolve(&self, rho: f64, snr: f64) -> Result<CsSetting> {
        let set = match (self.n, self.p, self.s) {
            (Some(n), Some(p), Some(s)) => CsSetting { n, p, s, rho, snr },
            (None, None, None) => datagen::lookup_setting(&self.name, rho, snr)?,
            _ => return Err(Error::Config(format!("setting {:?}: give all of n, p, s or none", self.name))),
        };
        set.validate()?;
        Ok(set)
    }
}

/// Either an explicit list or `{ from, to, count }` log-spaced.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum SnrSpec {
    List(Vec<f64>),
    Range { from: f64, to: f64, count: usize },
}

impl Default for SnrSpec {
    fn default() -> Self {
        SnrSpec::Range { from: 0.05, to: 60000.0, count: 20 }
    }
}

impl SnrSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            SnrSpec::List(v) if v.is_empty() => Err(Error::Config("empty snr list".into())),
            SnrSpec::List(v) => Ok(v.clone()),
            SnrSpec::Range { from, to, count: 1 } if from == to => Ok(vec![*from]),
            SnrSpec::Range { from, to, count } => Ok(datagen::logspace(*from, *to, *count)?),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EgpOverrides {
    pub lambda0_count: Option<usize>,
    pub lambda0_min: Option<f64>,
    /// Number of non-zero λ1 values (zero is always included).
    pub lambda1_count: Option<usize>,
    /// `false` drops the ℓ1 term entirely.
    pub l1: Option<bool>,
    pub lr: Option<Vec<f64>>,
    pub min_epochs: Option<usize>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub finetune: Option<bool>,
    /// `"refined"` or `"argmin"`.
    pub selection: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// `"adam"` or `"descent"`.
    pub optimizer: Option<String>,
}

impl EgpOverrides {
    pub fn apply(&self, mut cfg: EgpConfig) -> Result<EgpConfig> {
        if let Grid::Relative { lo, count, .. } = &mut cfg.lambda0 {
            *count = self.lambda0_count.unwrap_or(*count);
            *lo = self.lambda0_min.unwrap_or(*lo);
        }
        if let (Some(c), Grid::Relative { count, .. }) = (self.lambda1_count, &mut cfg.lambda1) {
            *count = c;
        }
        if self.l1 == Some(false) {
            cfg.lambda1 = Grid::Values(vec![0.0]);
        }
        if let Some(lr) = &self.lr {
            cfg.lr = lr.clone();
        }
        cfg.min_epochs = self.min_epochs.unwrap_or(cfg.min_epochs);
        cfg.max_epochs = self.max_epochs.unwrap_or(cfg.max_epochs);
        cfg.batch_size = self.batch_size.or(cfg.batch_size);
        cfg.finetune = self.finetune.unwrap_or(cfg.finetune);
        cfg.selection.alpha = self.alpha.unwrap_or(cfg.selection.alpha);
        cfg.selection.beta = self.beta.unwrap_or(cfg.selection.beta);
        match self.selection.as_deref() {
            None => {}
            Some("refined") => cfg.selection.mode = SelectionMode::Refined,
            Some("argmin") => cfg.selection.mode = SelectionMode::Argmin,
            Some(other) => return Err(Error::Config(format!("unknown selection {other:?}"))),
        }
        match self.optimizer.as_deref() {
            None => {}
            Some("adam") => cfg.optimizer = Optimizer::adam(),
            Some("descent") => cfg.optimizer = Optimizer::Descent,
            Some(other) => return Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineOverrides {
    pub lasso_lambdas: Option<usize>,
    pub lambda_min_ratio: Option<f64>,
    pub relaxed_lambdas: Option<usize>,
    pub relax_values: Option<usize>,
    pub iht_max_k: Option<usize>,
    pub stepwise_max_steps: Option<usize>,
}

impl BaselineOverrides {
    pub fn grid(&self) -> BaselineGrid {
        let d = BaselineGrid::default();
        BaselineGrid {
            lasso_lambdas: self.lasso_lambdas.unwrap_or(d.lasso_lambdas),
            lambda_min_ratio: self.lambda_min_ratio.unwrap_or(d.lambda_min_ratio),
            relaxed_lambdas: self.relaxed_lambdas.unwrap_or(d.relaxed_lambdas),
            relax_values: self.relax_values.unwrap_or(d.relax_values),
            iht_max_k: self.iht_max_k.unwrap_or(d.iht_max_k),
            stepwise_max_steps: self.stepwise_max_steps.or(d.stepwise_max_steps),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    /// `"M1"` or `"M2"`.
    pub setting: String,
    pub methods: Vec<String>,
    pub epochs: usize,
    pub runs: usize,
    /// Defaults to the setting's λ.
    pub lambda: Option<f64>,
    pub egp_lr: f64,
    pub descent_lr: f64,
    pub mc_lr: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            setting: "M1".into(),
            methods: ["egp", "egp-descent", "reinforce-loo", "bitflip-1"].map(String::from).to_vec(),
            epochs: 600,
            runs: 10,
            lambda: None,
            egp_lr: 0.1,
            descent_lr: 1e-3,
            mc_lr: 0.03,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    /// `"n"` or `"p"`.
    pub vary: String,
    pub grid: Vec<usize>,
    /// The dimension held fixed (`p` when varying `n` and vice versa).
    pub fixed: usize,
    pub s: usize,
    pub rho: f64,
    pub snr: f64,
    pub reps: usize,
    /// EGP runs exactly this many epochs, so timings compare equal work per epoch.
    pub epochs: Option<usize>,
    pub methods: Vec<String>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            vary: "n".into(),
            grid: vec![500, 1000, 2000, 4000, 8000],
            fixed: 100,
            s: 10,
            rho: 0.35,
            snr: 6.0,
            reps: 3,
            epochs: Some(100),
            methods: ["egp", "forward-stepwise-reimpl"].map(String::from).to_vec(),
        }
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn method_ids(&self) -> Result<Vec<MethodId>> {
        parse_methods(&self.methods)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods".into()));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("no settings".into()));
        }
        if self.settings.iter().any(|s| s.rho.is_empty()) {
            return Err(Error::Config("empty rho list".into()));
        }
        if self.settings.len() > usize::from(u16::MAX)
            || self.replications > usize::from(u16::MAX)
            || self.settings.iter().any(|s| s.rho.len() > 255)
        {
            return Err(Error::Config("grid too large".into()));
        }
        self.method_ids()?;
        for s in &self.settings {
            s.snr.values()?;
        }
        Ok(())
    }
}

pub fn parse_methods<S: AsRef<str>>(names: &[S]) -> Result<Vec<MethodId>> {
    if names.is_empty() {
        return Err(Error::Config("no methods".into()));
    }
    names.iter().map(|n| MethodId::parse(n.as_ref())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(SimConfig::parse("").unwrap(), SimConfig::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = SimConfig::parse(
            r#"
            seed = 7
            replications = 3
            methods = ["egp", "lasso-reimpl"]

            [[settings]]
            name = "S2"
            rho = [0.0, 0.7]
            snr = [1.0, 10.0]

            [[settings]]
            name = "tiny"
            n = 20
            p = 8
            s = 2
            snr = { from = 0.1, to = 10.0, count = 3 }

            [egp]
            lr = [0.1]
            selection = "argmin"
            l1 = false
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.settings[0].snr.values().unwrap(), vec![1.0, 10.0]);
        assert_eq!(cfg.settings[1].snr.values().unwrap().len(), 3);
        assert_eq!(cfg.settings[1].resolve(0.0, 1.0).unwrap().p, 8);
        let egp = cfg.egp.apply(EgpConfig::default()).unwrap();
        assert_eq!(egp.lr, vec![0.1]);
        assert_eq!(egp.lambda1, Grid::Values(vec![0.0]));
        assert_eq!(egp.selection.mode, SelectionMode::Argmin);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SimConfig::parse("replicates = 3").is_err());
        let mut cfg = SimConfig { replications: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.replications = 1;
        cfg.methods = vec!["nope".into()];
        assert!(cfg.validate().is_err());
        let half = SettingSpec { n: Some(3), ..Default::default() };
        assert!(half.resolve(0.0, 1.0).is_err());
        assert!(EgpOverrides { selection: Some("best".into()), ..Default::default() }
            .apply(EgpConfig::default())
            .is_err());
    }
}
