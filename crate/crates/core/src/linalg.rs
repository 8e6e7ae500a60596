//! Dense row-major linear algebra and seeded randomness.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Copy of the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    /// Copy of the given columns, in order.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |i, k| self.get(i, idx[k]))
    }

    /// Sum of squares of every column.
    pub fn col_sq_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v * v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `A x`.
pub fn matvec(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.cols {
        return Err(invalid(format!("matvec: x has length {}, expected {}", x.len(), a.cols)));
    }
    Ok((0..a.rows).map(|i| dot(a.row(i), x)).collect())
}

/// `Aᵀ x`.
pub fn matvec_t(a: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.rows {
        return Err(invalid(format!("matvec_t: x has length {}, expected {}", x.len(), a.rows)));
    }
    let mut out = vec![0.0; a.cols];
    for (i, xi) in x.iter().enumerate() {
        if *xi == 0.0 {
            continue;
        }
        axpy(*xi, a.row(i), &mut out);
    }
    Ok(out)
}

/// `A B`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(invalid(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    gemm(a.rows, a.cols, b.cols, &a.data, a.cols, 1, &b.data, b.cols, 1, &mut c.data);
    Ok(c)
}

/// `Aᵀ B` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(invalid(format!(
            "matmul_tn: ({}x{})ᵀ times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = Matrix::zeros(a.cols, b.cols);
    gemm(a.cols, a.rows, b.cols, &a.data, 1, a.cols, &b.data, b.cols, 1, &mut c.data);
    Ok(c)
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides describe matrices lying entirely inside `a`, `b` and `c`,
    // which the callers size as m×k, k×n and m×n respectively.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sq_norm(x: &[f64]) -> f64 {
    dot(x, x)
}

/// Lower-triangular `L` with `L Lᵀ = S`.
pub fn cholesky(s: &Matrix) -> Result<Matrix> {
    let n = s.rows;
    if s.cols != n {
        return Err(invalid(format!("cholesky of a non-square {}x{} matrix", s.rows, s.cols)));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let pivot = s.get(j, j) - dot(lj, lj);
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let d = pivot.sqrt();
        l.data[j * n + j] = d;
        for i in j + 1..n {
            let (head, tail) = l.data.split_at_mut(i * n);
            let v = s.get(i, j) - dot(&tail[..j], &head[j * n..j * n + j]);
            tail[j] = v / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut z = b.to_vec();
    for i in 0..n {
        let s = dot(&l.row(i)[..i], &z[..i]);
        z[i] = (z[i] - s) / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l.get(k, i) * z[k];
        }
        z[i] = s / l.get(i, i);
    }
    z
}

/// Least squares restricted to `support`: minimizes `||y - F_S x||²` via the
/// normal equations. When the Gram matrix is not numerically positive definite
/// a ridge of `1e-10 · (1 + max diag)` is added; the flag reports that.
pub fn least_squares_on(f: &Matrix, y: &[f64], support: &[usize]) -> (Vec<f64>, bool) {
    if support.is_empty() {
        return (Vec::new(), false);
    }
    let fs = f.select_cols(support);
    let gram = matmul_tn(&fs, &fs).expect("shapes agree");
    let rhs = matvec_t(&fs, y).expect("shapes agree");
    match cholesky(&gram) {
        Ok(l) => {
            let x = cholesky_solve(&l, &rhs);
            if x.iter().all(|v| v.is_finite()) && well_conditioned(&l) {
                return (x, false);
            }
            (ridge_solve(gram, &rhs), true)
        }
        Err(_) => (ridge_solve(gram, &rhs), true),
    }
}

fn well_conditioned(l: &Matrix) -> bool {
    let n = l.rows;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let d = l.get(i, i);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    // diag(L)² brackets the Gram spectrum loosely; 1e-7 on L is 1e-14 on the Gram.
    lo > 1e-7 * hi
}

fn ridge_solve(mut gram: Matrix, rhs: &[f64]) -> Vec<f64> {
    let n = gram.rows;
    let maxd = (0..n).map(|i| gram.get(i, i)).fold(0.0, f64::max);
    let mut ridge = 1e-10 * (1.0 + maxd);
    for i in 0..n {
        gram.data[i * n + i] += ridge;
    }
    loop {
        if let Ok(l) = cholesky(&gram) {
            return cholesky_solve(&l, rhs);
        }
        for i in 0..n {
            gram.data[i * n + i] += 9.0 * ridge;
        }
        ridge *= 10.0;
    }
}

/// Largest singular value of `A` squared, by power iteration on `AᵀA`.
pub fn spectral_norm_sq(a: &Matrix, iters: usize) -> f64 {
    if a.rows == 0 || a.cols == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..a.cols).map(|j| 1.0 + (j % 7) as f64 * 0.1).collect();
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let nv = sq_norm(&v).sqrt();
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let av = matvec(a, &v).expect("shapes agree");
        let next = sq_norm(&av);
        v = matvec_t(a, &av).expect("shapes agree");
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Seeded counter-based generator (ChaCha8 with an explicit stream id).
///
/// Identical `(seed, stream)` pairs give identical sequences on every platform.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent generator on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(self.seed, stream)
    }

    pub fn gauss(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_examples() {
        let id = Matrix::identity(2);
        assert_eq!(matvec(&id, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        assert_eq!(matvec(&Matrix::zeros(2, 2), &[3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matvec(&a, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert!(matches!(matvec(&a, &[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn matmul_agrees_with_naive() {
        let mut rng = Rng::new(1, 0);
        let a = Matrix::from_vec(5, 3, rng.gauss(15)).unwrap();
        let b = Matrix::from_vec(3, 4, rng.gauss(12)).unwrap();
        let c = matmul(&a, &b).unwrap();
        let at = a.transpose();
        let c2 = matmul_tn(&at, &b).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let naive: f64 = (0..3).map(|k| a.get(i, k) * b.get(k, j)).sum();
                assert!((c.get(i, j) - naive).abs() < 1e-12);
                assert!((c2.get(i, j) - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let s = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 5.0]]).unwrap();
        let l = cholesky(&s).unwrap();
        assert_eq!(l, Matrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 2.0]]).unwrap());
        let ar = Matrix::from_fn(3, 3, |i, j| 0.7f64.powi((i as i32 - j as i32).abs()));
        let l = cholesky(&ar).unwrap();
        let rec = matmul(&l, &l.transpose()).unwrap();
        for (x, y) in rec.as_slice().iter().zip(ar.as_slice()) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let s = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&s), Err(Error::NotPositiveDefinite { index: 1, .. })));
    }

    #[test]
    fn gauss_is_deterministic_and_standard() {
        assert!(Rng::new(7, 0).gauss(0).is_empty());
        assert_eq!(Rng::new(7, 0).gauss(3), Rng::new(7, 0).gauss(3));
        assert_ne!(Rng::new(7, 0).gauss(3), Rng::new(7, 1).gauss(3));
        let xs = Rng::new(11, 3).gauss(100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn least_squares_recovers_exact_fit() {
        let mut rng = Rng::new(3, 0);
        let f = Matrix::from_vec(20, 6, rng.gauss(120)).unwrap();
        let beta = [0.0, 1.5, 0.0, -2.0, 0.0, 0.0];
        let y = matvec(&f, &beta).unwrap();
        let (x, ridged) = least_squares_on(&f, &y, &[1, 3]);
        assert!(!ridged);
        assert!((x[0] - 1.5).abs() < 1e-12 && (x[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_underdetermined_falls_back_to_ridge() {
        let mut rng = Rng::new(4, 0);
        let f = Matrix::from_vec(3, 6, rng.gauss(18)).unwrap();
        let y = rng.gauss(3);
        let (x, ridged) = least_squares_on(&f, &y, &[0, 1, 2, 3, 4, 5]);
        assert!(ridged);
        let r: Vec<f64> = matvec(&f, &x).unwrap().iter().zip(&y).map(|(a, b)| a - b).collect();
        assert!(sq_norm(&r) < 1e-6);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((spectral_norm_sq(&a, 500) - 9.0).abs() < 1e-9);
    }
}
