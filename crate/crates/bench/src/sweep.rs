//! Grid sweeps: settings × ρ × SNR × replications × methods.

use std::path::{Path, PathBuf};

use egp_core::datagen::{self, CsSetting};
use egp_core::metrics::ResultRecord;
use egp_core::Rng;
use rayon::prelude::*;

use crate::aggregate::{self, Aggregate};
use crate::config::SimConfig;
use crate::error::{io_err, Result};
use crate::methods::{self, MethodId, MethodParams};
use crate::records;

/// One replication of one grid point. Its seed drives three streams: design
/// and noise (0), validation rows (1) and solver initialization (2).
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub setting: String,
    pub spec: CsSetting,
    pub rep: usize,
    pub seed: u64,
}

pub fn cells(cfg: &SimConfig) -> Result<Vec<Cell>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (si, set) in cfg.settings.iter().enumerate() {
        let snrs = set.snr.values()?;
        for (ri, &rho) in set.rho.iter().enumerate() {
            for (ni, &snr) in snrs.iter().enumerate() {
                let spec = set.resolve(rho, snr)?;
                for rep in 0..cfg.replications {
                    let coords = [si as u16, ri as u16, ni as u16, rep as u16];
                    out.push(Cell { setting: set.name.clone(), spec, rep, seed: crate::cell_seed(cfg.seed, &coords) });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    /// When off, wall times are written as 0 so that outputs are reproducible
    /// byte for byte.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { threads: 0, timing: true }
    }
}

pub fn run_cell(
    cell: &Cell,
    method: MethodId,
    params: &MethodParams,
    cfg: &SimConfig,
    timing: bool,
) -> Result<ResultRecord> {
    let ds = datagen::generate_cs(&cell.spec, &mut Rng::new(cell.seed, 0))?;
    let (train, val) = datagen::validation_split(&ds, cfg.validation_rows, &mut Rng::new(cell.seed, 1));
    let out = methods::run(method, &train, &val, params, &mut Rng::new(cell.seed, 2))?;
    let wall = if timing { out.wall_seconds } else { 0.0 };
    records::evaluate(method.label(), &cell.setting, &ds, &out.coef, cfg.loss_lambda, out.epochs, wall)
}

/// Every (cell, method) pair, in canonical order.
pub fn run_sweep(cfg: &SimConfig, opts: RunOptions) -> Result<Vec<ResultRecord>> {
    let cells = cells(cfg)?;
    let methods = cfg.method_ids()?;
    let params = MethodParams::from_config(cfg)?;
    let tasks: Vec<(&Cell, MethodId)> = cells.iter().flat_map(|c| methods.iter().map(move |m| (c, *m))).collect();
    let mut results = crate::with_threads(opts.threads, || {
        tasks
            .par_iter()
            .map(|(c, m)| run_cell(c, *m, &params, cfg, opts.timing))
            .collect::<Result<Vec<_>>>()
    })??;
    aggregate::sort_canonical(&mut results);
    Ok(results)
}

/// Writes `raw.csv` and `aggregate.csv` into `dir`.
pub fn write_outputs(dir: &Path, raw: &[ResultRecord]) -> Result<(PathBuf, PathBuf, Vec<Aggregate>)> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let raw_path = dir.join("raw.csv");
    let agg_path = dir.join("aggregate.csv");
    records::write_records(&raw_path, raw)?;
    let aggs = aggregate::aggregate(raw);
    aggregate::write_aggregates(&agg_path, &aggs)?;
    Ok((raw_path, agg_path, aggs))
}
