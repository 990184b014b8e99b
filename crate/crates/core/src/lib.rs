//! Solvers for smooth convex optimization over the spectrahedron
//! `{X : X ⪰ 0, tr(X) = τ}`.
//!
//! The crate provides:
//!
//! - [`solvers`]: Frank-Wolfe with line search, a generalized block
//!   Frank-Wolfe, a spectral Frank-Wolfe that works on the span of the
//!   bottom eigenvectors of the gradient, and projected gradient
//!   descent (plain and accelerated) as baselines.
//! - [`model`]: problem definition `f(X) = g(A X) + <C, X>`, objective
//!   and gradient oracles with measurement caching, the quadratic
//!   sensing benchmark generator, and instance persistence.
//! - [`linalg`]: dense symmetric eigendecomposition, a matrix-free
//!   Lanczos solver for extreme eigenpairs, thin QR, least squares and
//!   truncated SVD.
//! - [`geometry`]: Euclidean projections onto the probability simplex,
//!   the mixed `(eta, S)` block set used by the spectral subproblem,
//!   and the spectrahedron itself.
//! - [`sketch`]: a streaming two-sided randomized sketch of the iterate
//!   with rank-r reconstruction, so runs never have to store `X`.
//! - [`certify`]: post-hoc KKT / strict-complementarity certificates,
//!   quadratic-growth constants and a constructive face witness.

pub mod certify;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod sketch;
pub mod solvers;
mod threads;

pub use error::{Error, Result};

/// Library version, embedded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
