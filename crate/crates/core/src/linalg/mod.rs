//! Dense and matrix-free symmetric linear algebra.
//!
//! Eigenvalues are ordered descending everywhere in this crate
//! (`values[0]` is the largest); "k smallest" APIs return the k values
//! from the tail of that ordering, still sorted descending among
//! themselves.

mod eig;
mod factor;
mod lanczos;

pub use eig::sym_eig_full;
pub use factor::{best_rank_r, least_squares, thin_qr, ThinQr, TruncatedSvd};
pub use lanczos::{default_max_iter, lanczos_extreme, power_norm_est, Side};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense symmetric n-by-n matrix.
///
/// Construction validates symmetry; `symmetrize` is available for data
/// that is symmetric only up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a matrix, requiring finite entries and
    /// `|a_ij - a_ji| <= 1e-12 * max(1, max|a|)`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::input(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("matrix has non-finite entries"));
        }
        let scale = m.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::input(format!(
                        "matrix is not symmetric at ({i},{j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(SymMatrix { inner: m })
    }

    /// Replaces `m` by `(m + m^T)/2` and wraps it.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::input("cannot symmetrize a non-square matrix"));
        }
        let sym = (&m + m.transpose()).scale(0.5);
        Self::new(sym)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            inner: DMatrix::zeros(n, n),
        }
    }

    /// `scale * I`.
    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        SymMatrix {
            inner: DMatrix::identity(n, n) * scale,
        }
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        SymMatrix {
            inner: DMatrix::from_diagonal(d),
        }
    }

    /// `V S V^T` assembled densely (V: n-by-k, S: k-by-k symmetric).
    pub fn from_lowrank(v: &DMatrix<f64>, s: &DMatrix<f64>) -> Self {
        let vs = v * s;
        let m = &vs * v.transpose();
        // symmetrize rounding noise from the two products
        let sym = (&m + m.transpose()).scale(0.5);
        SymMatrix { inner: sym }
    }

    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// Trace inner product `<self, other>`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.inner.dot(&other.inner)
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.inner * v
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            inner: self.inner.scale(s),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            inner: &self.inner + &other.inner,
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            inner: &self.inner - &other.inner,
        }
    }
}

/// Eigenpairs with values sorted descending and orthonormal vectors.
#[derive(Debug, Clone)]
pub struct EigPairs {
    /// Eigenvalues, non-increasing.
    pub values: DVector<f64>,
    /// Matching eigenvectors as columns, orthonormal.
    pub vectors: DMatrix<f64>,
}

impl EigPairs {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Checks the ordering and orthonormality invariants; used by tests
    /// and debug assertions.
    pub fn validate(&self) -> Result<()> {
        for i in 1..self.values.len() {
            if self.values[i] > self.values[i - 1] + 1e-12 {
                return Err(Error::Numerical(format!(
                    "eigenvalues not sorted descending at index {i}"
                )));
            }
        }
        let gram = self.vectors.transpose() * &self.vectors;
        let k = self.k();
        for i in 0..k {
            for j in 0..k {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - expect).abs() > 1e-10 {
                    return Err(Error::Numerical(format!(
                        "eigenvectors not orthonormal at ({i},{j}): {}",
                        gram[(i, j)]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Matrix-free symmetric operator contract.
pub trait SymMatVec {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl SymMatVec for SymMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        SymMatrix::apply(self, v)
    }
}

/// Borrowed dense matrix viewed as an operator.
pub struct DenseOp<'a>(pub &'a DMatrix<f64>);

impl SymMatVec for DenseOp<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.0 * v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetry_validation_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(SymMatrix::new(m.clone()).is_err());
        assert!(SymMatrix::symmetrize(m).is_ok());
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 4.0]);
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn lowrank_assembly_matches_dense_product() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let m = SymMatrix::from_lowrank(&v, &s);
        let expect = &v * &s * v.transpose();
        assert!((m.as_matrix() - expect).norm() < 1e-14);
    }
}
