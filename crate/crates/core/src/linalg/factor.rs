//! QR, least squares, and truncated SVD on rectangular matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin QR factorization `B = Q R` with Q having orthonormal columns.
#[derive(Debug, Clone)]
pub struct ThinQr {
    /// m-by-k with orthonormal columns.
    pub q: DMatrix<f64>,
    /// k-by-k upper triangular.
    pub r: DMatrix<f64>,
    /// True when R has a (near-)zero diagonal entry, i.e. B was
    /// numerically rank deficient.
    pub rank_deficient: bool,
}

/// Thin QR of an m-by-k matrix with m >= k.
pub fn thin_qr(b: &DMatrix<f64>) -> Result<ThinQr> {
    let (m, k) = b.shape();
    if m < k {
        return Err(Error::input(format!(
            "thin QR needs at least as many rows as columns, got {m}x{k}"
        )));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    let qr = b.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let diag_max = (0..k).fold(0.0f64, |a, i| a.max(r[(i, i)].abs()));
    let rank_deficient = (0..k).any(|i| r[(i, i)].abs() <= 1e-12 * diag_max.max(1e-300));
    Ok(ThinQr {
        q,
        r,
        rank_deficient,
    })
}

/// Minimum-norm least-squares solution of `A X = B` via SVD.
///
/// Singular values below `1e-12 * sigma_max` are treated as zero. `A`
/// is l-by-k with l >= k; `B` is l-by-n; the result is k-by-n.
pub fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (l, k) = a.shape();
    if l < k {
        return Err(Error::input(format!(
            "least squares expects a tall system matrix, got {l}x{k}"
        )));
    }
    if b.nrows() != l {
        return Err(Error::input(format!(
            "right-hand side has {} rows, expected {l}",
            b.nrows()
        )));
    }
    if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let eps = 1e-12 * sigma_max;
    svd.solve(b, eps)
        .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))
}

/// Rank-r truncated SVD factors: `U diag(s) V^T` approximates the input.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// k-by-r, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Leading singular values, descending, length r.
    pub s: DVector<f64>,
    /// n-by-r, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * self.v.transpose()
    }
}

/// Best rank-r approximation of a k-by-n matrix in Frobenius norm.
pub fn best_rank_r(b: &DMatrix<f64>, r: usize) -> Result<TruncatedSvd> {
    let (k, n) = b.shape();
    if r == 0 || r > k.min(n) {
        return Err(Error::input(format!(
            "rank {r} out of range for a {k}x{n} matrix"
        )));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    let mut svd = b.clone().svd(true, true);
    svd.sort_by_singular_values();
    let u_full = svd.u.as_ref().expect("u requested");
    let vt_full = svd.v_t.as_ref().expect("v_t requested");
    let u = u_full.columns(0, r).into_owned();
    let s = DVector::from_iterator(r, (0..r).map(|i| svd.singular_values[i]));
    let v = vt_full.rows(0, r).transpose();
    Ok(TruncatedSvd { u, s, v })
}
