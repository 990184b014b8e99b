//! Problem definition and oracles: the objective
//! `f(X) = g(A X) + <C, X>` over `{X psd, tr X = tau}`, its gradient as
//! a matrix-free operator, smoothness constants, instance generation,
//! recovery metrics, and persistence.

mod io;
mod sensing;

pub use io::{load_instance, save_instance};
pub use sensing::{generate_quadratic_sensing, DiagMap, SensingMap};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{lanczos_extreme, Side, SymMatVec, SymMatrix};
use crate::sketch::SketchState;

/// Smooth outer function `g` with Lipschitz-gradient constant and
/// (optional) strong-convexity modulus.
#[derive(Clone)]
pub struct OuterFunction {
    kind: OuterKind,
    lipschitz_grad: f64,
    strong_convexity: f64,
}

#[derive(Clone)]
enum OuterKind {
    /// `g(z) = 1/2 ||z - y||^2`.
    HalfSquaredDistance { y: DVector<f64> },
    Custom {
        value: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
        grad: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    },
}

impl fmt::Debug for OuterFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            OuterKind::HalfSquaredDistance { .. } => "half_squared_distance",
            OuterKind::Custom { .. } => "custom",
        };
        f.debug_struct("OuterFunction")
            .field("kind", &name)
            .field("lipschitz_grad", &self.lipschitz_grad)
            .field("strong_convexity", &self.strong_convexity)
            .finish()
    }
}

impl OuterFunction {
    /// `g(z) = 1/2 ||z - y||^2`, with `L_g = 1` and modulus 1.
    pub fn half_squared_distance(y: DVector<f64>) -> Self {
        OuterFunction {
            kind: OuterKind::HalfSquaredDistance { y },
            lipschitz_grad: 1.0,
            strong_convexity: 1.0,
        }
    }

    /// Arbitrary smooth `g` from closures; the caller supplies `L_g`
    /// and the strong-convexity modulus (0 when unknown).
    pub fn custom(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        lipschitz_grad: f64,
        strong_convexity: f64,
    ) -> Self {
        OuterFunction {
            kind: OuterKind::Custom {
                value: Arc::new(value),
                grad: Arc::new(grad),
            },
            lipschitz_grad,
            strong_convexity,
        }
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        match &self.kind {
            OuterKind::HalfSquaredDistance { y } => 0.5 * (z - y).norm_squared(),
            OuterKind::Custom { value, .. } => value(z),
        }
    }

    pub fn grad(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            OuterKind::HalfSquaredDistance { y } => z - y,
            OuterKind::Custom { grad, .. } => grad(z),
        }
    }

    pub fn lipschitz_grad(&self) -> f64 {
        self.lipschitz_grad
    }

    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    /// The target vector when `g` is the built-in half squared
    /// distance; enables closed-form line searches.
    pub fn half_squared_target(&self) -> Option<&DVector<f64>> {
        match &self.kind {
            OuterKind::HalfSquaredDistance { y } => Some(y),
            OuterKind::Custom { .. } => None,
        }
    }
}

/// Linear measurement map `A : S^n -> R^m` with adjoint and low-rank
/// fast paths. All implementations must be deterministic for a fixed
/// input regardless of thread count.
pub trait MeasurementMap: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    /// `A(X)`.
    fn apply_dense(&self, x: &SymMatrix) -> DVector<f64>;
    /// `A(V S V^T)` without forming the product.
    fn apply_lowrank(&self, v: &DMatrix<f64>, s: &DMatrix<f64>) -> DVector<f64>;
    /// `(A* w) x` as a matrix-vector product.
    fn adjoint_matvec(&self, w: &DVector<f64>, x: &DVector<f64>) -> DVector<f64>;
    /// `A* w` assembled densely.
    fn adjoint_dense(&self, w: &DVector<f64>) -> SymMatrix;
    /// Exact operator norm when known in closed form.
    fn op_norm_exact(&self) -> Option<f64> {
        None
    }
    /// Downcast used by instance persistence.
    fn as_sensing(&self) -> Option<&SensingMap> {
        None
    }
    /// Compressed view of the map on a fixed frame `v`; implementations
    /// may precompute per-frame data.
    fn reduce<'a>(&'a self, v: &DMatrix<f64>) -> Box<dyn ReducedMeasurement + 'a> {
        Box::new(GenericReduced {
            map: self,
            v: v.clone_owned(),
        })
    }
}

/// The measurement map restricted to a frame `V` with orthonormal
/// columns: the linear map `S -> A(V S V^T)` on small symmetric
/// matrices, and its adjoint compression `w -> sym(V^T (A* w) V)`.
pub trait ReducedMeasurement {
    /// `A(V S V^T)`.
    fn apply(&self, s: &SymMatrix) -> DVector<f64>;
    /// `sym(V^T (A* w) V)`.
    fn compress_adjoint(&self, w: &DVector<f64>) -> SymMatrix;
}

struct GenericReduced<'a, M: MeasurementMap + ?Sized> {
    map: &'a M,
    v: DMatrix<f64>,
}

impl<M: MeasurementMap + ?Sized> ReducedMeasurement for GenericReduced<'_, M> {
    fn apply(&self, s: &SymMatrix) -> DVector<f64> {
        self.map.apply_lowrank(&self.v, s.as_matrix())
    }

    fn compress_adjoint(&self, w: &DVector<f64>) -> SymMatrix {
        let (n, k) = self.v.shape();
        let mut image = DMatrix::zeros(n, k);
        for j in 0..k {
            let col = self.map.adjoint_matvec(w, &self.v.column(j).clone_owned());
            image.set_column(j, &col);
        }
        let small = self.v.tr_mul(&image);
        SymMatrix::symmetrize(small).expect("compression of finite inputs")
    }
}

/// Wrapper scaling a map by a constant: `(s A)(X) = s A(X)`,
/// `(s A)* = s A*`. Used for the internal unit-trace rescaling.
pub struct ScaledMap {
    inner: Arc<dyn MeasurementMap>,
    scale: f64,
}

impl ScaledMap {
    pub fn new(inner: Arc<dyn MeasurementMap>, scale: f64) -> Self {
        ScaledMap { inner, scale }
    }
}

impl MeasurementMap for ScaledMap {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn m(&self) -> usize {
        self.inner.m()
    }

    fn apply_dense(&self, x: &SymMatrix) -> DVector<f64> {
        self.inner.apply_dense(x) * self.scale
    }

    fn apply_lowrank(&self, v: &DMatrix<f64>, s: &DMatrix<f64>) -> DVector<f64> {
        self.inner.apply_lowrank(v, s) * self.scale
    }

    fn adjoint_matvec(&self, w: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        self.inner.adjoint_matvec(w, x) * self.scale
    }

    fn adjoint_dense(&self, w: &DVector<f64>) -> SymMatrix {
        self.inner.adjoint_dense(w).scale(self.scale)
    }

    fn op_norm_exact(&self) -> Option<f64> {
        self.inner.op_norm_exact().map(|s| s * self.scale.abs())
    }

    fn reduce<'a>(&'a self, v: &DMatrix<f64>) -> Box<dyn ReducedMeasurement + 'a> {
        Box::new(ScaledReduced {
            inner: self.inner.reduce(v),
            scale: self.scale,
        })
    }
}

struct ScaledReduced<'a> {
    inner: Box<dyn ReducedMeasurement + 'a>,
    scale: f64,
}

impl ReducedMeasurement for ScaledReduced<'_> {
    fn apply(&self, s: &SymMatrix) -> DVector<f64> {
        self.inner.apply(s) * self.scale
    }

    fn compress_adjoint(&self, w: &DVector<f64>) -> SymMatrix {
        self.inner.compress_adjoint(w).scale(self.scale)
    }
}

/// Ground-truth factor attached to generated instances.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// n-by-r factor with `||U||_F = 1`.
    pub u_nat: DMatrix<f64>,
    pub noise_c: f64,
    pub seed: u64,
}

/// The full problem datum of `min g(A X) + <C, X>` over the
/// tau-spectrahedron.
#[derive(Clone)]
pub struct ProblemInstance {
    n: usize,
    tau: f64,
    outer: OuterFunction,
    map: Arc<dyn MeasurementMap>,
    c_matrix: Option<SymMatrix>,
    ground_truth: Option<GroundTruth>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("n", &self.n)
            .field("m", &self.map.m())
            .field("tau", &self.tau)
            .field("has_c", &self.c_matrix.is_some())
            .field("has_ground_truth", &self.ground_truth.is_some())
            .finish()
    }
}

impl ProblemInstance {
    pub fn new(
        outer: OuterFunction,
        map: Arc<dyn MeasurementMap>,
        c_matrix: Option<SymMatrix>,
        tau: f64,
        ground_truth: Option<GroundTruth>,
    ) -> Result<Self> {
        let n = map.n();
        if n == 0 {
            return Err(Error::input("problem dimension must be positive"));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::input(format!("trace bound must be positive, got {tau}")));
        }
        if let Some(c) = &c_matrix {
            if c.n() != n {
                return Err(Error::input(format!(
                    "linear term is {}x{}, problem dimension is {n}",
                    c.n(),
                    c.n()
                )));
            }
        }
        if let Some(y) = outer.half_squared_target() {
            if y.len() != map.m() {
                return Err(Error::input(format!(
                    "outer target has length {}, map output dimension is {}",
                    y.len(),
                    map.m()
                )));
            }
        }
        if let Some(gt) = &ground_truth {
            if gt.u_nat.nrows() != n {
                return Err(Error::input("ground-truth factor has wrong row count"));
            }
        }
        Ok(ProblemInstance {
            n,
            tau,
            outer,
            map,
            c_matrix,
            ground_truth,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.map.m()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn outer(&self) -> &OuterFunction {
        &self.outer
    }

    pub fn map(&self) -> &dyn MeasurementMap {
        self.map.as_ref()
    }

    pub fn map_arc(&self) -> Arc<dyn MeasurementMap> {
        Arc::clone(&self.map)
    }

    pub fn c_matrix(&self) -> Option<&SymMatrix> {
        self.c_matrix.as_ref()
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    /// Equivalent unit-trace problem `f~(X~) = f(tau X~)`: the map and
    /// the linear term are scaled by tau, so the z-cache of an internal
    /// iterate equals `A` applied to the original-scale iterate, and
    /// objectives agree exactly. Smoothness scales by `tau^2`. The
    /// ground truth is dropped (it refers to the original scale).
    pub fn rescaled_unit(&self) -> ProblemInstance {
        if self.tau == 1.0 {
            let mut clone = self.clone();
            clone.ground_truth = None;
            return clone;
        }
        ProblemInstance {
            n: self.n,
            tau: 1.0,
            outer: self.outer.clone(),
            map: Arc::new(ScaledMap::new(Arc::clone(&self.map), self.tau)),
            c_matrix: self.c_matrix.as_ref().map(|c| c.scale(self.tau)),
            ground_truth: None,
        }
    }
}

/// Iterate representation: full matrix, or the streaming sketch.
#[derive(Debug, Clone)]
pub enum Repr {
    Dense(SymMatrix),
    Sketch(SketchState),
}

/// Solver iterate with the measurement and linear-term caches
/// `z = A(X)` and `c = <C, X>` that make objective and gradient
/// evaluation independent of the (possibly absent) dense matrix.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub repr: Repr,
    pub z: DVector<f64>,
    pub c: f64,
    pub iter: usize,
}

impl IterateState {
    /// Dense start at `X0 = (tau/n) I`.
    pub fn init_dense(inst: &ProblemInstance) -> Self {
        let x0 = SymMatrix::scaled_identity(inst.n(), inst.tau() / inst.n() as f64);
        let z = inst.map().apply_dense(&x0);
        let c = inst
            .c_matrix()
            .map_or(0.0, |c| c.trace() * inst.tau() / inst.n() as f64);
        IterateState {
            repr: Repr::Dense(x0),
            z,
            c,
            iter: 0,
        }
    }

    /// Sketched start representing the same `X0 = (tau/n) I`.
    pub fn init_sketched(inst: &ProblemInstance, r: usize, seed: u64) -> Result<Self> {
        let mut sk = crate::sketch::sketch_init(inst.n(), r, seed)?;
        sk.add_scaled_identity(inst.tau() / inst.n() as f64);
        let x0 = SymMatrix::scaled_identity(inst.n(), inst.tau() / inst.n() as f64);
        let z = inst.map().apply_dense(&x0);
        let c = inst
            .c_matrix()
            .map_or(0.0, |c| c.trace() * inst.tau() / inst.n() as f64);
        Ok(IterateState {
            repr: Repr::Sketch(sk),
            z,
            c,
            iter: 0,
        })
    }

    pub fn x_dense(&self) -> Option<&SymMatrix> {
        match &self.repr {
            Repr::Dense(x) => Some(x),
            Repr::Sketch(_) => None,
        }
    }

    /// Verifies the caches against the dense matrix (no-op for
    /// sketched iterates): `||A(X) - z|| <= tol (1 + ||z||)` and
    /// `|<C,X> - c| <= tol (1 + |c|)`.
    pub fn check_coherence(&self, inst: &ProblemInstance, tol: f64) -> Result<()> {
        let Some(x) = self.x_dense() else {
            return Ok(());
        };
        let z_true = inst.map().apply_dense(x);
        let dz = (&z_true - &self.z).norm();
        if dz > tol * (1.0 + self.z.norm()) {
            return Err(Error::Numerical(format!(
                "measurement cache drifted by {dz} at iteration {}",
                self.iter
            )));
        }
        let c_true = inst.c_matrix().map_or(0.0, |c| c.dot(x));
        if (c_true - self.c).abs() > tol * (1.0 + self.c.abs()) {
            return Err(Error::Numerical(format!(
                "linear-term cache drifted by {} at iteration {}",
                (c_true - self.c).abs(),
                self.iter
            )));
        }
        Ok(())
    }

    /// Verifies `tr X = tau` and `lambda_min(X) >= -1e-8` for dense
    /// iterates.
    pub fn check_feasibility(&self, inst: &ProblemInstance) -> Result<()> {
        let Some(x) = self.x_dense() else {
            return Ok(());
        };
        let tr = x.trace();
        if (tr - inst.tau()).abs() > 1e-8 * inst.tau().max(1.0) {
            return Err(Error::Numerical(format!(
                "iterate trace {tr} differs from {}",
                inst.tau()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x0fea5);
        let bottom = lanczos_extreme(x, 1, Side::Smallest, 1e-9, x.n().min(200), &mut rng)?;
        if bottom.values[0] < -1e-8 {
            return Err(Error::Numerical(format!(
                "iterate has negative eigenvalue {}",
                bottom.values[0]
            )));
        }
        Ok(())
    }
}

/// `f(X) = g(z) + c`, evaluated from the caches.
pub fn objective(inst: &ProblemInstance, st: &IterateState) -> f64 {
    inst.outer().value(&st.z) + st.c
}

/// Matrix-free gradient operator `x -> (A* grad g(z)) x + C x`.
pub struct GradientOp<'a> {
    map: &'a dyn MeasurementMap,
    c_matrix: Option<&'a SymMatrix>,
    /// `grad g(z)` at the iterate this operator was built from.
    pub w: DVector<f64>,
    n: usize,
}

impl SymMatVec for GradientOp<'_> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = self.map.adjoint_matvec(&self.w, x);
        if let Some(c) = self.c_matrix {
            out += c.apply(x);
        }
        out
    }
}

/// Builds the gradient operator at the current iterate.
pub fn gradient_matvec<'a>(inst: &'a ProblemInstance, st: &IterateState) -> GradientOp<'a> {
    GradientOp {
        map: inst.map(),
        c_matrix: inst.c_matrix(),
        w: inst.outer().grad(&st.z),
        n: inst.n(),
    }
}

/// `grad f(X)` assembled densely; used by the projection-based solvers
/// and the certificate code.
pub fn gradient_dense(inst: &ProblemInstance, st: &IterateState) -> SymMatrix {
    let w = inst.outer().grad(&st.z);
    let mut g = inst.map().adjoint_dense(&w);
    if let Some(c) = inst.c_matrix() {
        g = g.add(c);
    }
    g
}

/// `<X, grad f(X)>` from the caches alone, via the adjoint identity
/// `<X, A* w> = <A(X), w>` plus `<X, C> = c`.
pub fn iterate_grad_inner(st: &IterateState, w: &DVector<f64>) -> f64 {
    st.z.dot(w) + st.c
}

/// Smoothness estimate with provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaEstimate {
    pub value: f64,
    /// False when the power iteration did not settle; the value then
    /// carries a 1.5x safety factor.
    pub converged: bool,
}

/// `beta = sigma_max(A)^2 L_g`, the Lipschitz constant of `grad f`.
///
/// `sigma_max` comes from the map's closed form when available, else
/// from power iteration on `X -> A*(A(X))` over symmetric matrices
/// (200 iterations, 1e-4 relative tolerance, fixed seed).
pub fn smoothness_beta(inst: &ProblemInstance, override_value: Option<f64>) -> BetaEstimate {
    if let Some(v) = override_value {
        return BetaEstimate {
            value: v,
            converged: true,
        };
    }
    let lg = inst.outer().lipschitz_grad();
    if let Some(s) = inst.map().op_norm_exact() {
        return BetaEstimate {
            value: s * s * lg,
            converged: true,
        };
    }
    let n = inst.n();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5bea7);
    let mut m = {
        let g = DMatrix::from_fn(n, n, |_, _| {
            use rand::Rng;
            rng.gen_range(-1.0f64..1.0)
        });
        SymMatrix::symmetrize(g).expect("random matrix is finite")
    };
    let norm = m.frobenius_norm();
    m = m.scale(1.0 / norm.max(1e-300));
    let mut est = 0.0f64;
    let mut converged = false;
    for _ in 0..200 {
        let image = inst.map().apply_dense(&m);
        let next = inst.map().adjoint_dense(&image);
        let nn = next.frobenius_norm();
        if nn <= 1e-300 {
            // The map annihilates every probe direction we can reach.
            return BetaEstimate {
                value: 0.0,
                converged: true,
            };
        }
        if (nn - est).abs() <= 1e-4 * nn {
            est = nn;
            converged = true;
            break;
        }
        est = nn;
        m = next.scale(1.0 / nn);
    }
    if converged {
        BetaEstimate {
            value: est * lg,
            converged: true,
        }
    } else {
        log::warn!("operator-norm power iteration did not settle; padding the estimate");
        BetaEstimate {
            value: est * lg * 1.5,
            converged: false,
        }
    }
}

/// `||X/tau - U U^T||_F / ||U U^T||_F`.
pub fn recovery_error(x: &SymMatrix, tau: f64, u_nat: &DMatrix<f64>) -> Result<f64> {
    if tau == 0.0 {
        return Err(Error::input("trace bound must be nonzero"));
    }
    if x.n() != u_nat.nrows() {
        return Err(Error::input(format!(
            "iterate is {}x{} but the factor has {} rows",
            x.n(),
            x.n(),
            u_nat.nrows()
        )));
    }
    let target = u_nat * u_nat.transpose();
    let denom = target.norm();
    if denom <= 1e-300 {
        return Err(Error::input("ground-truth factor is zero"));
    }
    let diff = x.as_matrix().unscale(tau) - target;
    Ok(diff.norm() / denom)
}
