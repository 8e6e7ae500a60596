//! Synthetic regression problems: Gaussian-coefficient instances for the
//! Monte Carlo comparison and autocorrelated-design instances for the
//! compressive sensing benchmark.

use std::io::{self, Read, Write};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Matrix, Rng};

/// Gaussian-coefficient setting `(n, p, s, κ, λ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McSetting {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub kappa: f64,
    pub lambda: f64,
}

impl McSetting {
    pub const M1: McSetting = McSetting { n: 60, p: 200, s: 3, kappa: 0.5, lambda: 2.0 };
    pub const M2: McSetting = McSetting { n: 200, p: 2000, s: 30, kappa: 0.75, lambda: 15.0 };

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.s > self.p || !(self.kappa >= 0.0) || !(self.lambda >= 0.0) {
            return Err(invalid(format!("invalid setting {self:?}")));
        }
        Ok(())
    }
}

/// Compressive sensing setting `(n, p, s)` at a given autocorrelation and SNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsSetting {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub snr: f64,
}

impl CsSetting {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.s > self.p {
            return Err(invalid(format!("invalid sizes in {self:?}")));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.snr > 0.0) || !self.snr.is_finite() {
            return Err(invalid(format!("snr must be positive, got {}", self.snr)));
        }
        Ok(())
    }
}

/// Row covariance of the design.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Covariance {
    Identity,
    /// `Σ_ij = ρ^|i-j|`.
    Autoregressive(f64),
}

impl Covariance {
    pub fn rho(&self) -> f64 {
        match *self {
            Covariance::Identity => 0.0,
            Covariance::Autoregressive(r) => r,
        }
    }

    pub fn dense(&self, p: usize) -> Matrix {
        match *self {
            Covariance::Identity => Matrix::identity(p),
            Covariance::Autoregressive(r) => {
                Matrix::from_fn(p, p, |i, j| r.powi((i as i32 - j as i32).abs()))
            }
        }
    }

    /// `Σ v` in O(p), exploiting the Toeplitz structure.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match *self {
            Covariance::Identity => v.to_vec(),
            Covariance::Autoregressive(r) => {
                let p = v.len();
                let mut fwd = vec![0.0; p];
                let mut acc = 0.0;
                for i in 0..p {
                    acc = r * acc + v[i];
                    fwd[i] = acc;
                }
                let mut out = vec![0.0; p];
                acc = 0.0;
                for i in (0..p).rev() {
                    acc = r * acc + v[i];
                    out[i] = fwd[i] + acc - v[i];
                }
                out
            }
        }
    }

    /// `vᵀ Σ v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        linalg::dot(v, &self.apply(v))
    }

    /// Maps iid standard normals `z` to a draw from `N(0, Σ)` using the
    /// closed-form Cholesky factor of the AR(1) covariance,
    /// `x_0 = z_0`, `x_i = ρ x_{i-1} + √(1-ρ²) z_i`.
    pub fn color(&self, z: &mut [f64]) {
        if let Covariance::Autoregressive(r) = *self {
            let c = (1.0 - r * r).sqrt();
            for i in 1..z.len() {
                z[i] = r * z[i - 1] + c * z[i];
            }
        }
    }
}

/// One problem instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub f: Matrix,
    pub y: Vec<f64>,
    pub beta: Vec<f64>,
    pub cov: Covariance,
    pub sigma2: f64,
    /// Sparsity of `beta` as generated.
    pub s: usize,
    /// `βᵀΣβ / σ²`; infinite for noise-free data.
    pub snr: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.f.rows()
    }

    pub fn p(&self) -> usize {
        self.f.cols()
    }

    pub fn rho(&self) -> f64 {
        self.cov.rho()
    }

    /// Same generative process, fresh rows.
    fn resample(&self, n: usize, rng: &mut Rng) -> Dataset {
        let p = self.p();
        let f = sample_design(n, p, self.cov, rng);
        let mut y = linalg::matvec(&f, &self.beta).expect("shapes agree");
        let sigma = self.sigma2.sqrt();
        for yi in &mut y {
            *yi += sigma * rng.normal();
        }
        Dataset { f, y, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            f: Matrix::zeros(0, self.p()),
            y: Vec::new(),
            beta: self.beta.clone(),
            cov: self.cov,
            sigma2: self.sigma2,
            s: self.s,
            snr: self.snr,
            seed: self.seed,
        }
    }
}

fn sample_design(n: usize, p: usize, cov: Covariance, rng: &mut Rng) -> Matrix {
    let mut f = Matrix::zeros(n, p);
    for i in 0..n {
        let row = f.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.normal();
        }
        cov.color(row);
    }
    f
}

/// `a .. b` in `n` points equally spaced on a log scale.
pub fn logspace(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(invalid(format!("logspace endpoints must be positive, got {a}, {b}")));
    }
    if n < 2 {
        return Err(invalid("logspace needs at least two points"));
    }
    let (la, lb) = (a.log10(), b.log10());
    let mut out: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(la + i as f64 / (n - 1) as f64 * (lb - la)))
        .collect();
    out[0] = a;
    out[n - 1] = b;
    Ok(out)
}

/// The SNR grid of the benchmark: 20 log-spaced values from 0.05 to 60000.
pub fn snr_grid() -> Vec<f64> {
    logspace(0.05, 60000.0, 20).expect("valid constants")
}

/// Autocorrelation levels crossed with every setting.
pub const RHO_GRID: [f64; 4] = [0.0, 0.35, 0.7, 0.9];

/// Gaussian design and Gaussian coefficients, `y = Fβ + κ·noise`.
pub fn generate_mc(setting: &McSetting, rng: &mut Rng) -> Result<Dataset> {
    setting.validate()?;
    let McSetting { n, p, s, kappa, .. } = *setting;
    let f = Matrix::from_vec(n, p, rng.gauss(n * p))?;
    let mut beta = vec![0.0; p];
    for b in beta.iter_mut().take(s) {
        *b = rng.normal();
    }
    let mut y = linalg::matvec(&f, &beta)?;
    for yi in &mut y {
        *yi += kappa * rng.normal();
    }
    let sigma2 = kappa * kappa;
    let signal = linalg::sq_norm(&beta);
    Ok(Dataset {
        f,
        y,
        beta,
        cov: Covariance::Identity,
        sigma2,
        s,
        snr: if sigma2 > 0.0 { signal / sigma2 } else { f64::INFINITY },
        seed: rng.seed(),
    })
}

/// Rows of `F` from `N(0, Σ)` with `Σ_ij = ρ^|i-j|`, `β = (1,…,1,0,…,0)`,
/// `σ² = βᵀΣβ / snr`, `y ~ N(Fβ, σ² I)`.
pub fn generate_cs(setting: &CsSetting, rng: &mut Rng) -> Result<Dataset> {
    setting.validate()?;
    let CsSetting { n, p, s, rho, snr } = *setting;
    let cov = if rho == 0.0 { Covariance::Identity } else { Covariance::Autoregressive(rho) };
    let mut beta = vec![0.0; p];
    beta[..s].iter_mut().for_each(|b| *b = 1.0);
    let sigma2 = cov.quad_form(&beta) / snr;
    let f = sample_design(n, p, cov, rng);
    let mut y = linalg::matvec(&f, &beta)?;
    let sigma = sigma2.sqrt();
    for yi in &mut y {
        *yi += sigma * rng.normal();
    }
    Ok(Dataset { f, y, beta, cov, sigma2, s, snr, seed: rng.seed() })
}

/// Named `(n, p, s)` templates; `rho` and `snr` are filled in by the caller.
pub fn builtin_settings() -> Vec<(&'static str, usize, usize, usize)> {
    vec![("S1", 100, 10, 5), ("S2", 50, 1000, 5), ("S3", 100, 1000, 10), ("S4", 100, 10000, 10)]
}

pub fn lookup_setting(name: &str, rho: f64, snr: f64) -> Result<CsSetting> {
    builtin_settings()
        .into_iter()
        .find(|(id, ..)| id.eq_ignore_ascii_case(name))
        .map(|(_, n, p, s)| CsSetting { n, p, s, rho, snr })
        .ok_or_else(|| Error::NotFound(format!("setting {name:?}")))
}

/// Returns the training set unchanged together with `n_val` freshly generated
/// validation rows sharing `β`, `Σ` and `σ²`.
pub fn validation_split(ds: &Dataset, n_val: usize, rng: &mut Rng) -> (Dataset, Dataset) {
    (ds.clone(), ds.resample(n_val, rng))
}

const MAGIC: &[u8; 8] = b"EGPDSET1";

/// Writes the little-endian container documented in the README.
pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [ds.n() as u64, ds.p() as u64, ds.s as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    let kind: u64 = match ds.cov {
        Covariance::Identity => 0,
        Covariance::Autoregressive(_) => 1,
    };
    for v in [ds.rho(), ds.snr, ds.sigma2] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&ds.seed.to_le_bytes())?;
    w.write_all(&kind.to_le_bytes())?;
    for v in ds.beta.iter().chain(ds.f.as_slice()).chain(&ds.y) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> io::Result<Dataset> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a dataset file"));
    }
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> io::Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let p = u64::from_le_bytes(next(&mut r)?) as usize;
    let s = u64::from_le_bytes(next(&mut r)?) as usize;
    let rho = f64::from_le_bytes(next(&mut r)?);
    let snr = f64::from_le_bytes(next(&mut r)?);
    let sigma2 = f64::from_le_bytes(next(&mut r)?);
    let seed = u64::from_le_bytes(next(&mut r)?);
    let kind = u64::from_le_bytes(next(&mut r)?);
    let cov = match kind {
        0 => Covariance::Identity,
        1 => Covariance::Autoregressive(rho),
        _ => return Err(bad("unknown covariance kind")),
    };
    let mut read_vec = |len: usize| -> io::Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let beta = read_vec(p)?;
    let f = Matrix::from_vec(n, p, read_vec(n * p)?).map_err(|e| bad(&e.to_string()))?;
    let y = read_vec(n)?;
    Ok(Dataset { f, y, beta, cov, sigma2, s, snr, seed })
}
