//! Dense decomposition helpers bridging ndarray storage to nalgebra solvers.
//!
//! Everything here is deterministic for a given input; eigenvalues and
//! singular values are returned sorted descending with their vectors
//! permuted to match.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn to_na_vec(v: ArrayView1<'_, f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i])
}

pub fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn from_na_vec(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_shape_fn(v.len(), |i| v[i])
}

/// Symmetric eigendecomposition, eigenvalues descending.
pub fn eigh_desc(sym: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if sym.nrows() != sym.ncols() {
        return Err(Error::InvalidDimension {
            what: "symmetric matrix",
            expected: sym.nrows(),
            got: sym.ncols(),
        });
    }
    let eig = to_na(sym).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = Array1::from_shape_fn(n, |i| eig.eigenvalues[order[i]]);
    let vecs = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    Ok((vals, vecs))
}

/// Thin QR of a tall matrix, returning the `m x n` Q factor.
pub fn thin_qr_q(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let qr = to_na(a).qr();
    from_na(&qr.q())
}

/// Thin SVD with singular values descending: `a = u * diag(s) * vt`.
pub fn svd_thin(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let svd = to_na(a)
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalBreakdown("svd failed to converge".into()))?;
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = Array1::from_shape_fn(k, |i| svd.singular_values[order[i]]);
    let uo = Array2::from_shape_fn((u.nrows(), k), |(i, j)| u[(i, order[j])]);
    let vto = Array2::from_shape_fn((k, vt.ncols()), |(i, j)| vt[(order[i], j)]);
    Ok((uo, s, vto))
}

/// Cholesky factor (lower) of an SPD matrix.
pub fn cholesky_lower(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let chol = to_na(a)
        .cholesky()
        .ok_or_else(|| Error::NumericalBreakdown("matrix is not positive definite".into()))?;
    Ok(from_na(&chol.l()))
}

/// Solve `L L^T x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    let mut x = b.to_owned();
    // Forward substitution L y = b.
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= l[(i, j)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    // Back substitution L^T x = y.
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= l[(j, i)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
    x
}
