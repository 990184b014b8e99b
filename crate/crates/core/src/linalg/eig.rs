//! Full dense symmetric eigendecomposition.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{EigPairs, SymMatrix};

/// Full eigendecomposition of a symmetric matrix, values descending.
///
/// The reconstruction `V diag(w) V^T` matches the input to about
/// `1e-9 * max(1, ||M||_F)`.
pub fn sym_eig_full(m: &SymMatrix) -> Result<EigPairs> {
    let n = m.n();
    if n == 0 {
        return Err(Error::input("cannot decompose an empty matrix"));
    }
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    // nalgebra returns eigenvalues in no particular order; sort them.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigPairs { values, vectors })
}
