//! EGP against score-function estimators on one fixed Gaussian dataset.

use std::path::{Path, PathBuf};

use egp_core::datagen::{self, Dataset, McSetting};
use egp_core::egp::{self, EgpConfig, Optimizer};
use egp_core::linalg::Matrix;
use egp_core::metrics::ResultRecord;
use egp_core::montecarlo::{self, Estimator, McOptions};
use egp_core::Rng;
use rayon::prelude::*;

use crate::aggregate::median;
use crate::config::McConfig;
use crate::error::{csv_err, io_err, Error, Result};
use crate::records::{self, fmt_f64};
use crate::sweep::RunOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McMethod {
    Egp,
    EgpDescent,
    Mc(Estimator),
}

impl McMethod {
    pub fn label(&self) -> &'static str {
        match self {
            McMethod::Egp => "egp",
            McMethod::EgpDescent => "egp-descent",
            McMethod::Mc(e) => e.label(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "egp" => Ok(McMethod::Egp),
            "egp-descent" => Ok(McMethod::EgpDescent),
            other => Estimator::from_label(other)
                .map(McMethod::Mc)
                .map_err(|_| Error::Config(format!("unknown comparison method {other:?}"))),
        }
    }
}

pub fn mc_setting(name: &str) -> Result<McSetting> {
    match name.to_ascii_uppercase().as_str() {
        "M1" => Ok(McSetting::M1),
        "M2" => Ok(McSetting::M2),
        _ => Err(Error::Config(format!("unknown Monte Carlo setting {name:?}"))),
    }
}

/// Single-column EGP at the comparison's λ, trained on all rows.
pub fn egp_config(cfg: &McConfig, lambda: f64, descent: bool) -> EgpConfig {
    let mut e = if descent {
        EgpConfig { optimizer: Optimizer::Descent, ..EgpConfig::single(lambda, 0.0, cfg.descent_lr) }
    } else {
        EgpConfig::single(lambda, 0.0, cfg.egp_lr)
    };
    e.max_epochs = cfg.epochs;
    e.min_epochs = e.min_epochs.min(cfg.epochs);
    e.record_trace = true;
    e
}

#[derive(Clone, Debug)]
pub struct McCompare {
    pub dataset: Dataset,
    pub lambda: f64,
    /// Per run, in method then run order.
    pub runs: Vec<ResultRecord>,
    /// Raw ℓ0 loss per epoch, same order as `runs`.
    pub traces: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub method: String,
    pub epoch: usize,
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub setting: String,
    pub runs: usize,
    pub re: f64,
    pub loss_norm: f64,
    pub loss_raw: f64,
    pub asre_mean: f64,
    pub asre_median: f64,
    /// Mean epochs until convergence.
    pub euc: f64,
    /// Mean seconds until convergence.
    pub tuc: f64,
}

/// Run seed `r` of the comparison; the dataset itself uses the master seed.
pub fn run_seed(master: u64, run: usize) -> u64 {
    crate::cell_seed(master, &[0xC0, run as u16])
}

pub fn run_mc_compare(cfg: &McConfig, master: u64, opts: RunOptions) -> Result<McCompare> {
    let setting = mc_setting(&cfg.setting)?;
    let methods = cfg.methods.iter().map(|m| McMethod::parse(m)).collect::<Result<Vec<_>>>()?;
    if methods.is_empty() || cfg.runs == 0 {
        return Err(Error::Config("comparison needs methods and at least one run".into()));
    }
    let lambda = cfg.lambda.unwrap_or(setting.lambda);
    let ds = datagen::generate_mc(&setting, &mut Rng::new(master, 0))?;
    let empty = Dataset { f: Matrix::zeros(0, ds.p()), y: Vec::new(), ..ds.clone() };
    let tasks: Vec<(McMethod, usize)> = methods.iter().flat_map(|m| (0..cfg.runs).map(move |r| (*m, r))).collect();
    let results = crate::with_threads(opts.threads, || {
        tasks
            .par_iter()
            .map(|&(m, r)| {
                let mut rng = Rng::new(run_seed(master, r), 0);
                let (coef, trace, epochs, wall) = match m {
                    McMethod::Egp | McMethod::EgpDescent => {
                        let e = egp_config(cfg, lambda, m == McMethod::EgpDescent);
                        let sol = egp::solve(&ds, &empty, &e, &mut rng)?;
                        (sol.coef, sol.trace, sol.epochs, sol.wall_seconds)
                    }
                    McMethod::Mc(est) => {
                        let o = McOptions::new(est, cfg.epochs, cfg.mc_lr);
                        let run = montecarlo::mc_solve(&ds, lambda, &o, &mut rng)?;
                        (run.coef, run.trace, cfg.epochs, run.wall_seconds)
                    }
                };
                let wall = if opts.timing { wall } else { 0.0 };
                let mut rec = records::evaluate(m.label(), &cfg.setting, &ds, &coef, lambda, epochs, wall)?;
                rec.seed = run_seed(master, r);
                Ok((rec, trace))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let (runs, traces) = results.into_iter().unzip();
    Ok(McCompare { dataset: ds, lambda, runs, traces })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, var.sqrt())
}

impl McCompare {
    fn groups(&self) -> Vec<(&str, Vec<usize>)> {
        let mut out: Vec<(&str, Vec<usize>)> = Vec::new();
        for (i, r) in self.runs.iter().enumerate() {
            match out.iter_mut().find(|(m, _)| *m == r.method) {
                Some((_, idx)) => idx.push(i),
                None => out.push((&r.method, vec![i])),
            }
        }
        out
    }

    /// Mean and standard deviation over runs per epoch. A run that stopped
    /// early contributes its final value to later epochs.
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        let mut out = Vec::new();
        for (method, idx) in self.groups() {
            let len = idx.iter().map(|&i| self.traces[i].len()).max().unwrap_or(0);
            for epoch in 0..len {
                let vals: Vec<f64> = idx
                    .iter()
                    .filter_map(|&i| self.traces[i].get(epoch).or(self.traces[i].last()).copied())
                    .collect();
                let (mean, sd) = mean_sd(&vals);
                out.push(TraceRow { method: method.to_string(), epoch, mean, sd, runs: vals.len() });
            }
        }
        out
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.groups()
            .into_iter()
            .map(|(method, idx)| {
                let col = |f: &dyn Fn(&ResultRecord) -> f64| idx.iter().map(|&i| f(&self.runs[i])).collect::<Vec<_>>();
                let mean = |v: Vec<f64>| mean_sd(&v).0;
                SummaryRow {
                    method: method.to_string(),
                    setting: self.runs[idx[0]].setting.clone(),
                    runs: idx.len(),
                    re: mean(col(&|r| r.re)),
                    loss_norm: mean(col(&|r| r.loss_norm)),
                    loss_raw: mean(col(&|r| r.loss_raw)),
                    asre_mean: mean(col(&|r| r.asre as f64)),
                    asre_median: median(&col(&|r| r.asre as f64)),
                    euc: mean(col(&|r| r.epochs as f64)),
                    tuc: mean(col(&|r| r.wall_seconds)),
                }
            })
            .collect()
    }

    /// Writes `mc_runs.csv`, `mc_traces.csv` and `mc_summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let runs = dir.join("mc_runs.csv");
        records::write_records(&runs, &self.runs)?;

        let traces = dir.join("mc_traces.csv");
        write_csv(&traces, ["method", "epoch", "mean", "sd", "runs"], self.trace_rows().iter().map(|t| {
            vec![t.method.clone(), t.epoch.to_string(), fmt_f64(t.mean), fmt_f64(t.sd), t.runs.to_string()]
        }))?;

        let summary = dir.join("mc_summary.csv");
        let header = ["method", "setting", "runs", "re", "loss_norm", "loss_raw", "asre_mean", "asre_median", "euc", "tuc"];
        write_csv(&summary, header, self.summary().iter().map(|s| {
            vec![
                s.method.clone(),
                s.setting.clone(),
                s.runs.to_string(),
                fmt_f64(s.re),
                fmt_f64(s.loss_norm),
                fmt_f64(s.loss_raw),
                fmt_f64(s.asre_mean),
                fmt_f64(s.asre_median),
                fmt_f64(s.euc),
                fmt_f64(s.tuc),
            ]
        }))?;
        Ok(vec![runs, traces, summary])
    }
}

pub(crate) fn write_csv<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}
