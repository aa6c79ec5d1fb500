//! Dense linear-algebra helpers used by the estimators.
//!
//! Thin wrappers over nalgebra decompositions, with ndarray-based
//! signatures matching the rest of the crate. Systems here are small in
//! the column dimension (design and Gram matrices over a handful of
//! treatment columns), so dense factorizations are always appropriate.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_dvector(v: ArrayView1<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn from_dvector(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_shape_fn(v.len(), |i| v[i])
}

/// Least-squares solution of `a x = b` via QR, for tall full-rank `a`.
pub fn lstsq_qr(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let qr = to_dmatrix(a).qr();
    let rhs = qr.q().transpose() * to_dvector(b);
    let mut x = rhs.rows(0, a.ncols()).into_owned();
    if !qr.r().solve_upper_triangular_mut(&mut x) {
        return Err(Error::Singular(
            "QR back-substitution failed: rank-deficient design".into(),
        ));
    }
    Ok(from_dvector(&x))
}

/// Minimum-norm least squares via the pseudo-inverse of the normal
/// equations. Tolerates rank deficiency (e.g. zero-variance columns);
/// `rel_eps` is the relative eigenvalue cutoff.
pub fn lstsq_normal_pinv(
    a: ArrayView2<f64>,
    b: ArrayView1<f64>,
    rel_eps: f64,
) -> Result<Array1<f64>> {
    let am = to_dmatrix(a);
    let gram = am.transpose() * &am;
    let rhs = am.transpose() * to_dvector(b);
    let x = sym_pinv(&gram, rel_eps)? * rhs;
    Ok(from_dvector(&x))
}

/// Pseudo-inverse of a symmetric matrix via its eigendecomposition.
fn sym_pinv(m: &DMatrix<f64>, rel_eps: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cut = rel_eps * max_abs.max(f64::MIN_POSITIVE);
    let mut inv_vals = DVector::zeros(n);
    for i in 0..n {
        let v = eig.eigenvalues[i];
        inv_vals[i] = if v.abs() > cut { 1.0 / v } else { 0.0 };
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&inv_vals) * q.transpose())
}

/// Inverse of a symmetric positive-definite matrix; errors if any
/// eigenvalue falls below `rel_eps` times the largest.
pub fn sym_inv_strict(m: ArrayView2<f64>, rel_eps: f64) -> Result<Array2<f64>> {
    let dm = to_dmatrix(m);
    let eig = dm.symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if max_abs == 0.0 {
        return Err(Error::Singular("zero matrix".into()));
    }
    let mut inv_vals = DVector::zeros(m.nrows());
    for i in 0..m.nrows() {
        let v = eig.eigenvalues[i];
        if v.abs() <= rel_eps * max_abs {
            return Err(Error::Singular(format!(
                "matrix is singular to tolerance (eigenvalue ratio {:.3e})",
                v.abs() / max_abs
            )));
        }
        inv_vals[i] = 1.0 / v;
    }
    let q = &eig.eigenvectors;
    Ok(from_dmatrix(&(q * DMatrix::from_diagonal(&inv_vals) * q.transpose())))
}

/// Singular values of `a`, descending.
pub fn singular_values(a: ArrayView2<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = to_dmatrix(a).singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// Right singular vector associated with the smallest singular value.
pub fn smallest_right_singular_vector(a: ArrayView2<f64>) -> Result<Array1<f64>> {
    let svd = to_dmatrix(a)
        .try_svd(false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Singular("SVD failed to converge".into()))?;
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut min_i = 0;
    for i in 1..svd.singular_values.len() {
        if svd.singular_values[i] < svd.singular_values[min_i] {
            min_i = i;
        }
    }
    Ok(Array1::from_iter(v_t.row(min_i).iter().copied()))
}
