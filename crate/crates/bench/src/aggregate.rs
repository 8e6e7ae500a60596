//! Medians and 0.3/0.7 quantiles per (method, setting, snr, ρ) group.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use egp_core::metrics::ResultRecord;

use crate::error::{csv_err, io_err, Result};
use crate::records::fmt_f64;

pub const QUANTILE_LO: f64 = 0.3;
pub const QUANTILE_HI: f64 = 0.7;

pub const METRICS: [&str; 8] = ["rte", "asre", "re", "loss_norm", "loss_raw", "epochs", "wall_seconds", "active_set_size"];

pub const HEADER: [&str; 12] = ["method", "setting", "n", "p", "s", "rho", "snr", "metric", "median", "q_lo", "q_hi", "count"];

/// Linear interpolation between order statistics (type 7). `sorted` must be
/// ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub method: String,
    pub setting: String,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub snr: f64,
    pub metric: &'static str,
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

pub fn metric(r: &ResultRecord, name: &str) -> f64 {
    match name {
        "rte" => r.rte,
        "asre" => r.asre as f64,
        "re" => r.re,
        "loss_norm" => r.loss_norm,
        "loss_raw" => r.loss_raw,
        "epochs" => r.epochs as f64,
        "wall_seconds" => r.wall_seconds,
        "active_set_size" => r.active_set_size as f64,
        _ => panic!("unknown metric {name}"),
    }
}

fn group_cmp(a: &ResultRecord, b: &ResultRecord) -> Ordering {
    a.method
        .cmp(&b.method)
        .then_with(|| a.setting.cmp(&b.setting))
        .then_with(|| a.snr.total_cmp(&b.snr))
        .then_with(|| a.rho.total_cmp(&b.rho))
}

/// Stable sort by group key; rows within a group keep their order.
pub fn sort_canonical(records: &mut [ResultRecord]) {
    records.sort_by(group_cmp);
}

/// One aggregate per group and metric, groups in canonical order.
pub fn aggregate(records: &[ResultRecord]) -> Vec<Aggregate> {
    let mut sorted = records.to_vec();
    sort_canonical(&mut sorted);
    let mut out = Vec::new();
    for group in sorted.chunk_by(|a, b| group_cmp(a, b) == Ordering::Equal) {
        let head = &group[0];
        for name in METRICS {
            let mut v: Vec<f64> = group.iter().map(|r| metric(r, name)).collect();
            v.sort_by(f64::total_cmp);
            out.push(Aggregate {
                method: head.method.clone(),
                setting: head.setting.clone(),
                n: head.n,
                p: head.p,
                s: head.s,
                rho: head.rho,
                snr: head.snr,
                metric: name,
                median: quantile(&v, 0.5),
                lo: quantile(&v, QUANTILE_LO),
                hi: quantile(&v, QUANTILE_HI),
                count: v.len(),
            });
        }
    }
    out
}

pub fn write_aggregates_to<W: Write>(aggs: &[Aggregate], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HEADER)?;
    for a in aggs {
        out.write_record([
            a.method.clone(),
            a.setting.clone(),
            a.n.to_string(),
            a.p.to_string(),
            a.s.to_string(),
            fmt_f64(a.rho),
            fmt_f64(a.snr),
            a.metric.to_string(),
            fmt_f64(a.median),
            fmt_f64(a.lo),
            fmt_f64(a.hi),
            a.count.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_aggregates(path: &Path, aggs: &[Aggregate]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_aggregates_to(aggs, std::io::BufWriter::new(file)).map_err(csv_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn type7_examples() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert!((quantile(&v, 0.3) - 1.9).abs() < 1e-15);
        assert!((quantile(&v, 0.7) - 3.1).abs() < 1e-15);
        assert_eq!(quantile(&[5.0], 0.3), 5.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    fn rec(method: &str, snr: f64, rte: f64) -> ResultRecord {
        ResultRecord {
            method: method.into(),
            setting: "S1".into(),
            n: 100,
            p: 10,
            s: 5,
            rho: 0.0,
            snr,
            seed: 0,
            rte,
            asre: 0,
            re: 0.0,
            loss_norm: 0.0,
            loss_raw: 0.0,
            epochs: 0,
            wall_seconds: 0.0,
            active_set_size: 0,
        }
    }

    #[test]
    fn groups_in_canonical_order() {
        let recs = vec![rec("lasso-reimpl", 2.0, 3.0), rec("egp", 2.0, 1.0), rec("egp", 1.0, 2.0), rec("egp", 2.0, 5.0)];
        let aggs: Vec<_> = aggregate(&recs).into_iter().filter(|a| a.metric == "rte").collect();
        let keys: Vec<_> = aggs.iter().map(|a| (a.method.as_str(), a.snr, a.count)).collect();
        assert_eq!(keys, vec![("egp", 1.0, 1), ("egp", 2.0, 2), ("lasso-reimpl", 2.0, 1)]);
        assert_eq!(aggs[1].median, 3.0);
    }

    proptest! {
        #[test]
        fn lo_median_hi_ordered(v in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            let (lo, m, hi) = (quantile(&s, QUANTILE_LO), quantile(&s, 0.5), quantile(&s, QUANTILE_HI));
            prop_assert!(s[0] <= lo && lo <= m && m <= hi && hi <= s[s.len() - 1]);
        }

        #[test]
        fn order_of_input_is_irrelevant(v in prop::collection::vec(0.0f64..10.0, 1..20), rot in 0usize..20) {
            let recs: Vec<_> = v.iter().map(|x| rec("egp", 1.0, *x)).collect();
            let mut shuffled = recs.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            prop_assert_eq!(aggregate(&recs), aggregate(&shuffled));
        }
    }
}
