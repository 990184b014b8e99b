//! Post-hoc structural diagnostics for a solved instance: the
//! complementarity certificate read off the gradient's spectrum at the
//! iterate, the quadratic-growth constant in its two regimes, and the
//! constructive face-witness inequality behind the local analysis.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig_full, SymMatrix};
use crate::model::ProblemInstance;

/// Rank threshold used when the caller has no better scale: eigenvalues
/// below `1e-6` times the largest magnitude count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-6;

/// Complementarity diagnostics at a feasible point. With
/// `Z = grad f(X) - s_star I`, an optimum satisfies `Z >= 0`,
/// `<Z, X> = 0`, and strict complementarity means the ranks of `X` and
/// `Z` fill the dimension exactly.
#[derive(Debug, Clone)]
pub struct KktCertificate {
    /// Smallest eigenvalue of the gradient (the dual scalar at an
    /// optimum).
    pub s_star: f64,
    /// Eigenvalues of `Z`, non-increasing; the last entry is zero by
    /// construction.
    pub z_spectrum: DVector<f64>,
    /// `lambda_{n-r}(grad f) - lambda_n(grad f)` for `r = rank_x`;
    /// positive iff complementarity is strict.
    pub eigengap: f64,
    pub rank_x: usize,
    pub rank_z: usize,
    /// `<Z, X> / tau`; near zero only at an optimum.
    pub comp_residual: f64,
    pub strict_comp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthCase {
    /// Generic regime: strongly convex outer function.
    StronglyConvexG,
    /// Degenerate regime `rank Z = n - 1`: the bound depends on the
    /// eigengap alone.
    RankDeficientOne,
}

impl fmt::Display for GrowthCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthCase::StronglyConvexG => "strongly_convex_g",
            GrowthCase::RankDeficientOne => "rank_deficient_one",
        })
    }
}

/// Ingredients of the generic-regime constant.
#[derive(Debug, Clone, Copy)]
pub struct GrowthComponents {
    /// `lambda_{n-r}(Z)`.
    pub lambda_z: f64,
    /// Largest singular value of the trace-augmented measurement map.
    pub sigma_max: f64,
    /// Smallest singular value of that map compressed to the bottom
    /// eigenspace.
    pub sigma_min: f64,
    /// Strong-convexity modulus of the outer function.
    pub alpha: f64,
}

/// Quadratic-growth constant `gamma` with the regime that produced it.
#[derive(Debug, Clone)]
pub struct GrowthConstant {
    pub gamma: f64,
    pub case: GrowthCase,
    /// Present in the generic regime only.
    pub components: Option<GrowthComponents>,
}

/// `grad f(X) = A*(grad g(A X)) + C`, assembled densely.
fn gradient_at(inst: &ProblemInstance, x: &SymMatrix) -> SymMatrix {
    let z = inst.map().apply_dense(x);
    let w = inst.outer().grad(&z);
    let mut g = inst.map().adjoint_dense(&w);
    if let Some(c) = inst.c_matrix() {
        g = g.add(c);
    }
    g
}

fn check_feasible(inst: &ProblemInstance, x: &SymMatrix) -> Result<()> {
    if x.n() != inst.n() {
        return Err(Error::input(format!(
            "certificate point is {}x{}, instance dimension is {}",
            x.n(),
            x.n(),
            inst.n()
        )));
    }
    let tau = inst.tau();
    let scale = tau.abs().max(1.0);
    if (x.trace() - tau).abs() > 1e-6 * scale {
        return Err(Error::input(format!(
            "certificate point has trace {}, expected {}",
            x.trace(),
            tau
        )));
    }
    let eig = sym_eig_full(x)?;
    let lam_min = eig.values[eig.values.len() - 1];
    if lam_min < -1e-6 * scale {
        return Err(Error::input(format!(
            "certificate point is not positive semidefinite (lambda_min = {lam_min})"
        )));
    }
    Ok(())
}

fn numerical_rank(values: &DVector<f64>, rank_tol: f64) -> usize {
    let largest = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if largest == 0.0 {
        return 0;
    }
    values
        .iter()
        .filter(|&&v| v.abs() > rank_tol * largest)
        .count()
}

/// Builds the complementarity certificate at a feasible `X`. The point
/// need not be optimal; a poor `comp_residual` is reported, not
/// rejected.
pub fn kkt_certificate(
    inst: &ProblemInstance,
    x: &SymMatrix,
    rank_tol: f64,
) -> Result<KktCertificate> {
    if !(rank_tol > 0.0) {
        return Err(Error::input("rank tolerance must be positive"));
    }
    check_feasible(inst, x)?;
    let n = inst.n();
    let grad = gradient_at(inst, x);
    let geig = sym_eig_full(&grad)?;
    let s_star = geig.values[n - 1];
    let z_spectrum = DVector::from_fn(n, |i, _| geig.values[i] - s_star);
    let xeig = sym_eig_full(x)?;
    let rank_x = numerical_rank(&xeig.values, rank_tol);
    let rank_z = numerical_rank(&z_spectrum, rank_tol);
    let eigengap = if rank_x >= 1 && rank_x < n {
        z_spectrum[n - 1 - rank_x] - z_spectrum[n - 1]
    } else {
        0.0
    };
    // <Z, X> = <grad f, X> - s_star tr(X).
    let comp_residual = (x.dot(&grad) - s_star * x.trace()) / inst.tau();
    Ok(KktCertificate {
        s_star,
        z_spectrum,
        eigengap,
        rank_x,
        rank_z,
        comp_residual,
        strict_comp: rank_x + rank_z == n,
    })
}

/// `sigma_max` of the trace-augmented map `X -> [tr X; A(X)]` by power
/// iteration on its Gram operator `M -> tr(M) I + A*(A(M))`.
fn augmented_sigma_max(inst: &ProblemInstance) -> f64 {
    let n = inst.n();
    let mut rng = ChaCha8Rng::seed_from_u64(0x51f_a417);
    let mut m = SymMatrix::symmetrize(DMatrix::from_fn(n, n, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }))
    .expect("random matrix is finite");
    let nrm = m.frobenius_norm().max(1e-300);
    m = m.scale(1.0 / nrm);
    let mut est = 0.0f64;
    for _ in 0..500 {
        let image = inst.map().apply_dense(&m);
        let next = inst
            .map()
            .adjoint_dense(&image)
            .add(&SymMatrix::scaled_identity(n, m.trace()));
        let nn = next.frobenius_norm();
        if nn <= 1e-300 {
            return 0.0;
        }
        let done = (nn - est).abs() <= 1e-9 * nn;
        est = nn;
        m = next.scale(1.0 / nn);
        if done {
            break;
        }
    }
    est.sqrt()
}

/// Columns of the compressed augmented map on an orthonormal basis of
/// the small symmetric space (off-diagonal elements scaled by
/// `1/sqrt(2)`), stacked as an `(m+1) x r(r+1)/2` matrix.
fn augmented_compressed(inst: &ProblemInstance, v: &DMatrix<f64>) -> DMatrix<f64> {
    let r = v.ncols();
    let m = inst.map().m();
    let cols = r * (r + 1) / 2;
    let mut out = DMatrix::zeros(m + 1, cols);
    let mut col = 0;
    for i in 0..r {
        for j in i..r {
            let mut b = DMatrix::zeros(r, r);
            if i == j {
                b[(i, i)] = 1.0;
            } else {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                b[(i, j)] = s;
                b[(j, i)] = s;
            }
            // tr(V B V^T) = tr(B).
            out[(0, col)] = b.trace();
            let image = inst.map().apply_lowrank(v, &b);
            for q in 0..m {
                out[(q + 1, col)] = image[q];
            }
            col += 1;
        }
    }
    out
}

/// Quadratic-growth constant at a certified point. Requires strict
/// complementarity; the generic regime additionally requires a strongly
/// convex outer function.
pub fn growth_constant(
    inst: &ProblemInstance,
    cert: &KktCertificate,
    x: &SymMatrix,
) -> Result<GrowthConstant> {
    if !cert.strict_comp {
        return Err(Error::Certificate(
            "growth constant is defined only under strict complementarity \
             (rank X + rank Z = n)"
                .into(),
        ));
    }
    let n = inst.n();
    let lambda_z = cert.eigengap;
    if !(lambda_z > 0.0) {
        return Err(Error::Certificate(format!(
            "nonpositive eigengap {lambda_z}; the growth bound is vacuous"
        )));
    }
    if cert.rank_z == n - 1 {
        return Ok(GrowthConstant {
            gamma: 0.5 * lambda_z,
            case: GrowthCase::RankDeficientOne,
            components: None,
        });
    }
    let alpha = inst.outer().strong_convexity();
    if !(alpha > 0.0) {
        return Err(Error::Certificate(
            "the generic growth regime needs a strongly convex outer function".into(),
        ));
    }
    let r_star = cert.rank_x;
    let grad = gradient_at(inst, x);
    let geig = sym_eig_full(&grad)?;
    let v = geig.vectors.columns(n - r_star, r_star).into_owned();
    let compressed = augmented_compressed(inst, &v);
    let sigma_min = compressed
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let sigma_max = augmented_sigma_max(inst);
    if !(sigma_min > 0.0) || !sigma_min.is_finite() {
        return Err(Error::Certificate(format!(
            "compressed measurement map is singular (sigma_min = {sigma_min})"
        )));
    }
    let ratio = (sigma_max * sigma_max) / (sigma_min * sigma_min);
    let gamma = (lambda_z / (4.0 + 8.0 * ratio)).min(alpha * sigma_min * sigma_min / 8.0);
    Ok(GrowthConstant {
        gamma,
        case: GrowthCase::StronglyConvexG,
        components: Some(GrowthComponents {
            lambda_z,
            sigma_max,
            sigma_min,
            alpha,
        }),
    })
}

/// Constructive witness on the bottom-`r` face of `Y`: returns a unit-
/// trace PSD `W` supported on the bottom-`r` eigenspace satisfying
/// `<X - W, Y> >= (delta/2) ||X - W||_F^2`, where `delta` is the
/// eigengap above that eigenspace.
pub fn face_witness(y: &SymMatrix, r: usize, x: &SymMatrix) -> Result<SymMatrix> {
    let n = y.n();
    if r == 0 || r >= n {
        return Err(Error::input(format!(
            "face dimension {r} must satisfy 1 <= r < n = {n}"
        )));
    }
    if x.n() != n {
        return Err(Error::input("witness point dimension mismatch"));
    }
    if (x.trace() - 1.0).abs() > 1e-6 {
        return Err(Error::input(format!(
            "witness needs a unit-trace point, got trace {}",
            x.trace()
        )));
    }
    let xeig = sym_eig_full(x)?;
    if xeig.values[n - 1] < -1e-6 {
        return Err(Error::input(
            "witness needs a positive semidefinite point",
        ));
    }
    let yeig = sym_eig_full(y)?;
    let delta = yeig.values[n - r - 1] - yeig.values[n - r];
    if !(delta > 0.0) {
        return Err(Error::Certificate(format!(
            "zero eigengap above the bottom-{r} eigenspace (delta = {delta}); \
             the witness construction needs a strict gap"
        )));
    }
    let v2 = yeig.vectors.columns(n - r, r).into_owned();
    // X restricted to the face: X2 = P X P with P = V2 V2^T; its
    // spectrum lives in the small matrix V2^T X V2.
    let xv = x.as_matrix() * &v2;
    let small = SymMatrix::symmetrize(v2.tr_mul(&xv))?;
    let seig = sym_eig_full(&small)?;
    let eps = 1.0 - seig.values.sum();
    // Small negative eigenvalues from roundoff are clipped so W stays
    // PSD; the uniform top-up keeps the trace exactly one.
    let lam_w = DVector::from_fn(r, |i, _| seig.values[i].max(0.0) + eps / r as f64);
    let basis = &v2 * &seig.vectors;
    Ok(SymMatrix::from_lowrank(
        &basis,
        &DMatrix::from_diagonal(&lam_w),
    ))
}
