//! Wall time as `n` or `p` grows with everything else fixed.

use std::path::{Path, PathBuf};

use egp_core::datagen::{self, CsSetting};
use egp_core::metrics::ResultRecord;
use egp_core::Rng;
use rayon::prelude::*;

use crate::aggregate::{quantile, QUANTILE_HI, QUANTILE_LO};
use crate::compare::write_csv;
use crate::config::SimConfig;
use crate::error::{io_err, Error, Result};
use crate::methods::{self, MethodId, MethodParams};
use crate::records::{self, fmt_f64};
use crate::sweep::RunOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Vary {
    N,
    P,
}

impl Vary {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Vary::N),
            "p" => Ok(Vary::P),
            _ => Err(Error::Config(format!("vary must be \"n\" or \"p\", got {s:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Vary::N => "n",
            Vary::P => "p",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub method: String,
    pub vary: Vary,
    pub n: usize,
    pub p: usize,
    pub runs: usize,
    pub median_seconds: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    /// Median time over the median at the previous grid point.
    pub ratio: Option<f64>,
}

/// Dataset shape at grid value `v`.
pub fn shape(cfg: &SimConfig, vary: Vary, v: usize) -> CsSetting {
    let sc = &cfg.scaling;
    let (n, p) = match vary {
        Vary::N => (v, sc.fixed),
        Vary::P => (sc.fixed, v),
    };
    CsSetting { n, p, s: sc.s.min(p), rho: sc.rho, snr: sc.snr }
}

/// Raw records: one pass over the grid per repetition, methods in config order
/// at each grid point.
pub fn run_scaling(cfg: &SimConfig, opts: RunOptions) -> Result<Vec<ResultRecord>> {
    let sc = &cfg.scaling;
    let vary = Vary::parse(&sc.vary)?;
    if sc.grid.is_empty() {
        return Err(Error::Config("empty scaling grid".into()));
    }
    if sc.grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("scaling grid must be strictly increasing".into()));
    }
    if sc.reps == 0 {
        return Err(Error::Config("scaling needs at least one repetition".into()));
    }
    let methods = crate::config::parse_methods(&sc.methods)?;
    let mut params = MethodParams::from_config(cfg)?;
    if let Some(e) = sc.epochs {
        for c in [&mut params.egp, &mut params.egp_l0] {
            c.min_epochs = e;
            c.max_epochs = e;
        }
    }
    let mut tasks: Vec<(usize, MethodId, usize)> = Vec::new();
    for r in 0..sc.reps {
        for gi in 0..sc.grid.len() {
            tasks.extend(methods.iter().map(|m| (gi, *m, r)));
        }
    }
    crate::with_threads(opts.threads, || {
        tasks
            .par_iter()
            .map(|&(gi, m, r)| {
                let seed = crate::cell_seed(cfg.seed, &[0x5C, gi as u16, r as u16]);
                let ds = datagen::generate_cs(&shape(cfg, vary, sc.grid[gi]), &mut Rng::new(seed, 0))?;
                let (train, val) = datagen::validation_split(&ds, cfg.validation_rows, &mut Rng::new(seed, 1));
                let out = methods::run(m, &train, &val, &params, &mut Rng::new(seed, 2))?;
                let wall = if opts.timing { out.wall_seconds } else { 0.0 };
                let setting = format!("scaling-{}", vary.label());
                records::evaluate(m.label(), &setting, &ds, &out.coef, cfg.loss_lambda, out.epochs, wall)
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// Median wall time per (method, grid point), methods in first-seen order.
pub fn summarize(raw: &[ResultRecord], vary: Vary) -> Vec<ScalingRow> {
    let mut methods: Vec<&str> = Vec::new();
    for r in raw {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = Vec::new();
    for m in methods {
        let mut points: Vec<(usize, usize)> = Vec::new();
        for r in raw.iter().filter(|r| r.method == m) {
            if !points.contains(&(r.n, r.p)) {
                points.push((r.n, r.p));
            }
        }
        let mut prev: Option<f64> = None;
        for (n, p) in points {
            let mut t: Vec<f64> = raw
                .iter()
                .filter(|r| r.method == m && r.n == n && r.p == p)
                .map(|r| r.wall_seconds)
                .collect();
            t.sort_by(f64::total_cmp);
            let med = quantile(&t, 0.5);
            out.push(ScalingRow {
                method: m.to_string(),
                vary,
                n,
                p,
                runs: t.len(),
                median_seconds: med,
                q_lo: quantile(&t, QUANTILE_LO),
                q_hi: quantile(&t, QUANTILE_HI),
                ratio: prev.filter(|v| *v > 0.0).map(|v| med / v),
            });
            prev = Some(med);
        }
    }
    out
}

/// Writes `scaling_raw.csv` and `scaling.csv` into `dir`.
pub fn write_outputs(dir: &Path, raw: &[ResultRecord], rows: &[ScalingRow]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let raw_path = dir.join("scaling_raw.csv");
    records::write_records(&raw_path, raw)?;
    let path = dir.join("scaling.csv");
    let header = ["method", "vary", "n", "p", "runs", "median_seconds", "q_lo", "q_hi", "ratio"];
    write_csv(&path, header, rows.iter().map(|r| {
        vec![
            r.method.clone(),
            r.vary.label().to_string(),
            r.n.to_string(),
            r.p.to_string(),
            r.runs.to_string(),
            fmt_f64(r.median_seconds),
            fmt_f64(r.q_lo),
            fmt_f64(r.q_hi),
            r.ratio.map(fmt_f64).unwrap_or_default(),
        ]
    }))?;
    Ok(vec![raw_path, path])
}
