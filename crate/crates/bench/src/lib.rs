//! Benchmark orchestration on top of `egp-core`: simulation sweeps with
//! median/quantile aggregation, the Monte Carlo convergence comparison and
//! wall-time scaling runs. Everything ends up in CSV files.

pub mod aggregate;
pub mod compare;
pub mod config;
mod error;
pub mod methods;
pub mod records;
pub mod scaling;
pub mod sweep;

pub use error::{Error, Result};

/// Seed of one cell, drawn from the master seed on a stream that encodes the
/// cell coordinates.
pub fn cell_seed(master: u64, coords: &[u16]) -> u64 {
    let stream = coords.iter().fold(0u64, |acc, c| acc << 16 | u64::from(*c));
    egp_core::Rng::new(master, stream).next_u64()
}

/// Runs `f` on a pool with `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}
