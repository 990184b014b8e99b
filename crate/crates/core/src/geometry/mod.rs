//! Euclidean projections onto the feasible sets used by the solvers:
//! the scaled probability simplex, the trace-bounded PSD cone slice
//! (spectrahedron), and the joint step/block set used by the low-rank
//! subproblem.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig_full, SymMatrix};

/// Projection of `v` onto `{ w : w >= 0, sum(w) = tau }`.
///
/// Sorting-based exact algorithm, O(d log d).
pub fn project_simplex(v: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    if v.is_empty() {
        return Err(Error::input("cannot project an empty vector"));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::input(format!("simplex scale must be positive, got {tau}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("vector has non-finite entries"));
    }
    let d = v.len();
    let mut u: Vec<f64> = v.iter().copied().collect();
    u.sort_by(|a, b| b.partial_cmp(a).expect("entries are finite"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - tau) / (j as f64 + 1.0);
        if uj - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    Ok(DVector::from_iterator(
        d,
        v.iter().map(|&x| (x - theta).max(0.0)),
    ))
}

/// Projection of a symmetric matrix onto
/// `{ X : X psd, tr(X) = tau }` by projecting its eigenvalues onto the
/// scaled simplex in the eigenbasis.
pub fn project_spectrahedron(x: &SymMatrix, tau: f64) -> Result<SymMatrix> {
    let eig = sym_eig_full(x)?;
    let lam = project_simplex(&eig.values, tau)?;
    Ok(SymMatrix::from_lowrank(
        &eig.vectors,
        &DMatrix::from_diagonal(&lam),
    ))
}

/// Joint projection of a scalar/matrix pair `(eta, S)` onto
/// `{ eta >= 0, S psd, eta + tr(S) = total }`.
///
/// The set and the Frobenius objective are invariant under conjugating
/// `S` by any orthogonal matrix, so the projection reduces exactly to a
/// simplex projection of `(eta, spectrum(S))` in the eigenbasis of `S`.
pub fn project_eta_block(eta: f64, s: &SymMatrix, total: f64) -> Result<(f64, SymMatrix)> {
    if !eta.is_finite() {
        return Err(Error::input("step weight must be finite"));
    }
    let eig = sym_eig_full(s)?;
    let k = s.n();
    let mut stacked = DVector::zeros(k + 1);
    stacked[0] = eta;
    for i in 0..k {
        stacked[i + 1] = eig.values[i];
    }
    let proj = project_simplex(&stacked, total)?;
    let lam = DVector::from_iterator(k, (0..k).map(|i| proj[i + 1]));
    let s_proj = SymMatrix::from_lowrank(&eig.vectors, &DMatrix::from_diagonal(&lam));
    Ok((proj[0], s_proj))
}
