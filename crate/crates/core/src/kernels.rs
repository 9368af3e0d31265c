//! Gaussian kernel and Gram matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Default Gaussian bandwidth.
pub const DEFAULT_SIGMA: f64 = 10.0;

/// Smallest accepted Cholesky pivot, relative to the largest diagonal entry.
const PIVOT_RTOL: f64 = 1e-10;

/// Jitter per training row used by [`gram_gaussian_auto`] when the plain
/// Gram matrix fails to factorize.
pub const AUTO_JITTER_PER_ROW: f64 = 1e-8;

/// `exp(-‖a − b‖² / (2σ²))`
pub fn gaussian(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>, sigma: f64) -> f64 {
    let d2: f64 = a.into_iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

fn sq_dist(x: &DMatrix<f64>, i: usize, z: &DMatrix<f64>, j: usize) -> f64 {
    (0..x.ncols()).map(|c| (x[(i, c)] - z[(j, c)]).powi(2)).sum()
}

/// Kernel values between every row of `a` and every row of `b` (no jitter).
pub fn cross_kernel(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let denom = 2.0 * sigma * sigma;
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| (-sq_dist(a, i, b, j) / denom).exp())
}

/// Symmetric positive definite Gram matrix together with its factorization.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    sigma: f64,
    jitter: f64,
    auto_jitter: bool,
    chol: Cholesky<f64, Dyn>,
}

impl GramMatrix {
    /// Wrap an arbitrary symmetric matrix (already including any jitter).
    pub fn from_matrix(values: DMatrix<f64>, sigma: f64, jitter: f64) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::invalid("gram matrix must be square"));
        }
        let chol = factorize(&values).ok_or(Error::NotPositiveDefinite { jitter })?;
        Ok(GramMatrix { values, sigma, jitter, auto_jitter: false, chol })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// True when the jitter was added by the automatic retry.
    pub fn auto_jitter(&self) -> bool {
        self.auto_jitter
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.values * v
    }
}

fn factorize(values: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let max_diag = values.diagonal().max();
    if !(max_diag > 0.0) {
        return None;
    }
    let chol = Cholesky::new(values.clone())?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    (min_pivot > PIVOT_RTOL * max_diag).then_some(chol)
}

/// `K[i][j] = exp(−‖xᵢ−xⱼ‖²/(2σ²)) + jitter·[i=j]`, rejected if it does not
/// factorize.
pub fn gram_gaussian(ds: &Dataset, sigma: f64, jitter: f64) -> Result<GramMatrix> {
    gram_from_instances(ds.x(), sigma, jitter)
}

pub fn gram_from_instances(x: &DMatrix<f64>, sigma: f64, jitter: f64) -> Result<GramMatrix> {
    if !(sigma > 0.0) || !(jitter >= 0.0) {
        return Err(Error::invalid(format!("need sigma > 0 and jitter >= 0 (got {sigma}, {jitter})")));
    }
    let n = x.nrows();
    let denom = 2.0 * sigma * sigma;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 + jitter;
        for j in 0..i {
            let v = (-sq_dist(x, i, x, j) / denom).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    GramMatrix::from_matrix(k, sigma, jitter)
}

/// Like [`gram_gaussian`] with zero jitter, retrying once with
/// `1e-8 · n` on the diagonal when the factorization fails.
pub fn gram_gaussian_auto(ds: &Dataset, sigma: f64) -> Result<GramMatrix> {
    match gram_gaussian(ds, sigma, 0.0) {
        Ok(k) => Ok(k),
        Err(Error::NotPositiveDefinite { .. }) => {
            let mut k = gram_gaussian(ds, sigma, AUTO_JITTER_PER_ROW * ds.n() as f64)?;
            k.auto_jitter = true;
            Ok(k)
        }
        Err(e) => Err(e),
    }
}

/// Solve `K v = rhs` through the stored factorization, with one step of
/// iterative refinement.
pub fn solve_gram(k: &GramMatrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if rhs.len() != k.n() {
        return Err(Error::LengthMismatch { left: k.n(), right: rhs.len() });
    }
    let mut v = k.chol.solve(rhs);
    let r = rhs - &k.values * &v;
    v += k.chol.solve(&r);
    Ok(v)
}
