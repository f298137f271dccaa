//! Small dense symmetric-matrix helpers shared across modules.
//!
//! Everything here operates on the desk-scale matrices of this crate
//! (dimensions in the single digits), so eigendecomposition is the workhorse
//! and no care is taken to avoid O(m^3).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry and PSD checks.
pub const SYM_TOL: f64 = 1e-10;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Scale used to make eigenvalue tolerances relative: max(1, max |entry|).
fn scale_of(m: &DMatrix<f64>) -> f64 {
    max_abs(m).max(1.0)
}

pub fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    check_square(m, "symmetric matrix")?;
    let mut max_asym = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            max_asym = max_asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if max_asym > SYM_TOL * scale_of(m) {
        return Err(Error::NotSymmetric { max_asym });
    }
    Ok(())
}

/// Eigenvalues (ascending) and matching eigenvectors of a symmetric matrix.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = DVector::from_iterator(idx.len(), idx.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = DMatrix::from_columns(
        &idx.iter()
            .map(|&i| eig.eigenvectors.column(i).clone_owned())
            .collect::<Vec<_>>(),
    );
    (vals, vecs)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals[0]
}

/// PSD within the eigenvalue tolerance; matrix must already be symmetric.
pub fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(m)?;
    let min_eig = min_eigenvalue(m);
    if min_eig < -SYM_TOL * scale_of(m) {
        return Err(Error::NotPsd { min_eig });
    }
    Ok(())
}

/// Strictly positive definite within tolerance.
pub fn check_pd(m: &DMatrix<f64>) -> Result<()> {
    check_symmetric(m)?;
    let min_eig = min_eigenvalue(m);
    if min_eig <= SYM_TOL * scale_of(m) {
        return Err(Error::NotPd { min_eig });
    }
    Ok(())
}

/// Cholesky-type factor L with L L^T = m, falling back to the eigenvector
/// factor U sqrt(Lambda) when the matrix is only semidefinite.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.l());
    }
    let (vals, vecs) = sym_eigen(m);
    let tol = SYM_TOL * scale_of(m);
    if vals[0] < -tol {
        return Err(Error::NotPsd { min_eig: vals[0] });
    }
    let sqrt = DVector::from_iterator(vals.len(), vals.iter().map(|&v| v.max(0.0).sqrt()));
    Ok(&vecs * DMatrix::from_diagonal(&sqrt))
}

/// Symmetric square root of a PSD matrix via eigendecomposition.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    let (vals, vecs) = sym_eigen(m);
    let tol = SYM_TOL * scale_of(m);
    if vals[0] < -tol {
        return Err(Error::NotPsd { min_eig: vals[0] });
    }
    let sqrt = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| v.max(0.0).sqrt()),
    ));
    Ok(&vecs * sqrt * vecs.transpose())
}

pub fn log_det_pd(m: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(m)?;
    let (vals, _) = sym_eigen(m);
    if vals[0] <= SYM_TOL * scale_of(m) {
        return Err(Error::CollapsedMeasure);
    }
    Ok(vals.iter().map(|v| v.ln()).sum())
}

pub fn invert_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_pd(m)?;
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NotPd {
            min_eig: min_eigenvalue(m),
        })
}

/// Weighted sample mean and covariance of column points, with the standard
/// unbiased correction 1/(1 - sum w_i^2) on normalized weights.
pub fn weighted_mean_cov(points: &DMatrix<f64>, weights: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.ncols();
    assert_eq!(n, weights.len(), "one weight per column point");
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "weights must have positive total");
    let m = points.nrows();
    let mut mean = DVector::zeros(m);
    for (i, col) in points.column_iter().enumerate() {
        mean += col * (weights[i] / total);
    }
    let mut cov = DMatrix::zeros(m, m);
    let mut sq_sum = 0.0;
    let mut d = DVector::zeros(m);
    for (i, col) in points.column_iter().enumerate() {
        let w = weights[i] / total;
        sq_sum += w * w;
        d.copy_from(&col);
        d -= &mean;
        for r in 0..m {
            for c in 0..=r {
                cov[(r, c)] += w * d[r] * d[c];
            }
        }
    }
    let denom = 1.0 - sq_sum;
    if denom > 0.0 {
        cov /= denom;
    }
    for r in 0..m {
        for c in (r + 1)..m {
            cov[(r, c)] = cov[(c, r)];
        }
    }
    (mean, cov)
}

pub fn sample_mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n > 1);
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, var)
}

/// Least-squares line fit returning (slope, intercept, r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(n >= 2.0);
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Global cosine similarity between two vector fields given as column stacks.
pub fn cosine_similarity_fields(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    assert_eq!(u.shape(), v.shape());
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v.iter()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}
