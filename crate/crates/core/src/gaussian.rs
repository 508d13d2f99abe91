//! Dense Gaussian helpers shared by the filter, fusion and reduction code.

use nalgebra::allocator::Allocator;
use nalgebra::{Cholesky, DMatrix, DVector, DefaultAllocator, Dim, Dyn, OMatrix, OVector};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal jitter added when a covariance fails to factorize.
pub const JITTER: f64 = 1e-12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Cholesky factor of `m`, retrying once with `JITTER * I` added.
pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    Cholesky::new(m + DMatrix::identity(n, n) * JITTER).ok_or(Error::SingularCovariance)
}

/// Copy a square dynamic matrix into storage of dimension `d`, fixed-size
/// where the caller knows the size.
pub(crate) fn to_sized<D: Dim>(m: &DMatrix<f64>, d: D) -> OMatrix<f64, D, D>
where
    DefaultAllocator: Allocator<D, D>,
{
    OMatrix::from_iterator_generic(d, d, m.iter().copied())
}

pub(crate) fn to_sized_vec<D: Dim>(v: &DVector<f64>, d: D) -> OVector<f64, D>
where
    DefaultAllocator: Allocator<D>,
{
    OVector::from_iterator_generic(d, nalgebra::U1, v.iter().copied())
}

pub(crate) fn to_dynamic<D: Dim>(m: &OMatrix<f64, D, D>) -> DMatrix<f64>
where
    DefaultAllocator: Allocator<D, D>,
{
    DMatrix::from_iterator(m.nrows(), m.ncols(), m.iter().copied())
}

/// [`cholesky`] for matrices of any storage.
pub(crate) fn cholesky_sized<D: Dim>(m: &OMatrix<f64, D, D>) -> Result<Cholesky<f64, D>>
where
    DefaultAllocator: Allocator<D, D>,
{
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let (r, c) = m.shape_generic();
    Cholesky::new(m + OMatrix::identity_generic(r, c) * JITTER).ok_or(Error::SingularCovariance)
}

pub(crate) fn log_det_sized<D: Dim>(chol: &Cholesky<f64, D>) -> f64
where
    DefaultAllocator: Allocator<D, D>,
{
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    log_det_sized(chol)
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(symmetrized(cholesky(m)?.inverse()))
}

/// Natural log of the multivariate normal density N(x; mean, cov).
pub fn log_normal_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    check_dim(mean.len(), x.len())?;
    check_dim(mean.len(), cov.nrows())?;
    let chol = cholesky(cov)?;
    Ok(log_normal_pdf_chol(&(x - mean), &chol))
}

pub(crate) fn log_normal_pdf_chol(diff: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let d = diff.len() as f64;
    let solved = chol.solve(diff);
    -0.5 * (d * LN_2PI + log_det(chol) + diff.dot(&solved))
}

pub fn normal_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    log_normal_pdf(x, mean, cov).map(f64::exp)
}

/// Scalar normal log-density.
pub fn log_normal_pdf_1d(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub fn mahalanobis_sq(diff: &DVector<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    diff.dot(&chol.solve(diff))
}

/// `ln(sum(exp(v)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Largest absolute asymmetry relative to the largest entry.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = symmetrized(m.clone());
    sym.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
