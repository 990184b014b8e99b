//! Two-sided randomized streaming sketch of a symmetric matrix.
//!
//! The sketch tracks `Yc = X Psi` and `Yr = Phi X` for random test
//! matrices `Psi` (n-by-(2r+1)) and `Phi` ((4r+3)-by-n) while `X`
//! evolves through updates `X <- eta X + V S V^T`, without ever forming
//! `X`. A rank-r factorization is reconstructed on demand from the two
//! sketches via QR, a minimum-norm least-squares solve, and a truncated
//! SVD. The reconstruction is not necessarily positive semidefinite;
//! callers that care should inspect the spectrum of the symmetrized
//! product.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{best_rank_r, least_squares, thin_qr};

/// Streaming sketch state; see the module docs for the linear model.
#[derive(Debug, Clone)]
pub struct SketchState {
    n: usize,
    r: usize,
    psi: DMatrix<f64>,
    phi: DMatrix<f64>,
    yc: DMatrix<f64>,
    yr: DMatrix<f64>,
    seed: u64,
    updated: bool,
}

/// Rank-r factors `left * diag(sigma) * right^T` approximating the
/// sketched matrix.
#[derive(Debug, Clone)]
pub struct SketchFactors {
    /// n-by-r.
    pub left: DMatrix<f64>,
    /// Singular values, descending, length r.
    pub sigma: DVector<f64>,
    /// n-by-r.
    pub right: DMatrix<f64>,
    /// True when the row-sketch system was numerically rank deficient
    /// and the minimum-norm solution was taken.
    pub ill_conditioned: bool,
}

impl SketchFactors {
    pub fn reconstruct_dense(&self) -> DMatrix<f64> {
        &self.left * DMatrix::from_diagonal(&self.sigma) * self.right.transpose()
    }
}

impl SketchState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Column-sketch width, `2r + 1`.
    pub fn k_s(&self) -> usize {
        2 * self.r + 1
    }

    /// Row-sketch height, `4r + 3`.
    pub fn l(&self) -> usize {
        4 * self.r + 3
    }

    pub fn yc(&self) -> &DMatrix<f64> {
        &self.yc
    }

    pub fn yr(&self) -> &DMatrix<f64> {
        &self.yr
    }

    /// Fold `alpha * I` into the sketched matrix. Used to seed the
    /// stream with a scaled-identity starting iterate, which a low-rank
    /// update cannot express.
    pub fn add_scaled_identity(&mut self, alpha: f64) {
        self.yc += self.psi.scale(alpha);
        self.yr += self.phi.scale(alpha);
        self.updated = true;
    }
}

/// Fresh sketch for an n-by-n stream targeting rank r; test matrices
/// are seeded standard normal, both sketches start at zero.
pub fn sketch_init(n: usize, r: usize, seed: u64) -> Result<SketchState> {
    if r == 0 || r > n {
        return Err(Error::input(format!(
            "sketch rank must satisfy 1 <= r <= n, got r={r}, n={n}"
        )));
    }
    let k_s = 2 * r + 1;
    let l = 4 * r + 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = DMatrix::zeros(n, k_s);
    for i in 0..n {
        for j in 0..k_s {
            psi[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut phi = DMatrix::zeros(l, n);
    for i in 0..l {
        for j in 0..n {
            phi[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(SketchState {
        n,
        r,
        psi,
        phi,
        yc: DMatrix::zeros(n, k_s),
        yr: DMatrix::zeros(l, n),
        seed,
        updated: false,
    })
}

/// Apply the update `X <- eta X + V S V^T` to both sketches:
/// `Yc <- V S (V^T Psi) + eta Yc` and `Yr <- (Phi V) S V^T + eta Yr`.
/// Cost is O(n k (k_s + l)); `V S V^T` is never formed.
pub fn sketch_update(
    st: &mut SketchState,
    v: &DMatrix<f64>,
    s: &DMatrix<f64>,
    eta: f64,
) -> Result<()> {
    let k = v.ncols();
    if v.nrows() != st.n {
        return Err(Error::input(format!(
            "update factor has {} rows, sketch dimension is {}",
            v.nrows(),
            st.n
        )));
    }
    if s.shape() != (k, k) {
        return Err(Error::input(format!(
            "core block is {}x{}, expected {k}x{k}",
            s.nrows(),
            s.ncols()
        )));
    }
    if !eta.is_finite() {
        return Err(Error::input("sketch update weight must be finite"));
    }
    let vs = v * s;
    let vt_psi = v.transpose() * &st.psi;
    st.yc = &vs * vt_psi + st.yc.scale(eta);
    let phi_v = &st.phi * v;
    st.yr = phi_v * s * v.transpose() + st.yr.scale(eta);
    st.updated = true;
    Ok(())
}

/// Rank-r reconstruction `Q [B]_r` where `Yc = Q R` and
/// `B = (Phi Q)^+ Yr`, returned as SVD-style factors.
pub fn sketch_reconstruct(st: &SketchState) -> Result<SketchFactors> {
    let (n, r) = (st.n, st.r);
    if !st.updated {
        return Ok(SketchFactors {
            left: DMatrix::zeros(n, r),
            sigma: DVector::zeros(r),
            right: DMatrix::zeros(n, r),
            ill_conditioned: false,
        });
    }
    let qr = thin_qr(&st.yc)?;
    let phi_q = &st.phi * &qr.q;
    let sys = thin_qr(&phi_q)?;
    let b = least_squares(&phi_q, &st.yr)?;
    let core = best_rank_r(&b, r)?;
    Ok(SketchFactors {
        left: &qr.q * &core.u,
        sigma: core.s,
        right: core.v,
        ill_conditioned: sys.rank_deficient,
    })
}
