//! The result CSV: one [`ResultRecord`] per row, fixed column order.

use std::io::{Read, Write};
use std::path::Path;

use egp_core::datagen::Dataset;
use egp_core::metrics::{self, ResultRecord};
use egp_core::Coefficient;

use crate::error::{csv_err, io_err, Error, Result};

pub const HEADER: [&str; 16] = [
    "method",
    "setting",
    "n",
    "p",
    "s",
    "rho",
    "snr",
    "seed",
    "rte",
    "asre",
    "re",
    "loss_norm",
    "loss_raw",
    "epochs",
    "wall_seconds",
    "active_set_size",
];

/// Scores `coef` against the dataset's true coefficients. Losses use the
/// training rows.
pub fn evaluate(
    method: &str,
    setting: &str,
    ds: &Dataset,
    coef: &Coefficient,
    loss_lambda: f64,
    epochs: usize,
    wall_seconds: f64,
) -> Result<ResultRecord> {
    let theta = coef.values();
    Ok(ResultRecord {
        method: method.to_string(),
        setting: setting.to_string(),
        n: ds.n(),
        p: ds.p(),
        s: ds.s,
        rho: ds.rho(),
        snr: ds.snr,
        seed: ds.seed,
        rte: metrics::rte(theta, &ds.beta, &ds.cov, ds.sigma2)?,
        asre: metrics::asre(theta, &ds.beta),
        re: metrics::re(theta, &ds.beta),
        loss_norm: metrics::l0_loss(theta, &ds.f, &ds.y, loss_lambda, true),
        loss_raw: metrics::l0_loss(theta, &ds.f, &ds.y, loss_lambda, false),
        epochs,
        wall_seconds,
        active_set_size: coef.nnz(),
    })
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fields(r: &ResultRecord) -> [String; 16] {
    [
        r.method.clone(),
        r.setting.clone(),
        r.n.to_string(),
        r.p.to_string(),
        r.s.to_string(),
        fmt_f64(r.rho),
        fmt_f64(r.snr),
        r.seed.to_string(),
        fmt_f64(r.rte),
        r.asre.to_string(),
        fmt_f64(r.re),
        fmt_f64(r.loss_norm),
        fmt_f64(r.loss_raw),
        r.epochs.to_string(),
        fmt_f64(r.wall_seconds),
        r.active_set_size.to_string(),
    ]
}

pub fn write_records_to<W: Write>(records: &[ResultRecord], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for r in records {
        out.write_record(fields(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_records_to(records, std::io::BufWriter::new(file)).map_err(csv_err(path))
}

pub fn read_records_from<R: Read>(r: R) -> std::result::Result<Vec<ResultRecord>, String> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(HEADER) {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let bad = |col: usize| format!("row {}: bad {} {:?}", line + 1, HEADER[col], &row[col]);
        let f = |col: usize| row[col].parse::<f64>().map_err(|_| bad(col));
        let u = |col: usize| row[col].parse::<usize>().map_err(|_| bad(col));
        out.push(ResultRecord {
            method: row[0].to_string(),
            setting: row[1].to_string(),
            n: u(2)?,
            p: u(3)?,
            s: u(4)?,
            rho: f(5)?,
            snr: f(6)?,
            seed: row[7].parse().map_err(|_| bad(7))?,
            rte: f(8)?,
            asre: u(9)?,
            re: f(10)?,
            loss_norm: f(11)?,
            loss_raw: f(12)?,
            epochs: u(13)?,
            wall_seconds: f(14)?,
            active_set_size: u(15)?,
        });
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_records_from(file).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
