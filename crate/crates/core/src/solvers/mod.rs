//! The solver families over the trace-bounded PSD cone: classical
//! Frank-Wolfe with exact line search, the block variant that steps
//! along the top eigenvectors of a shifted iterate, the spectral
//! variant that solves a small subproblem over the bottom eigenspace of
//! the gradient, and projected-gradient baselines (plain and
//! accelerated).
//!
//! All solvers run internally on the equivalent unit-trace problem
//! `f~(X~) = f(tau X~)` and rescale on output; the reported objective
//! and Frank-Wolfe gap are invariant under that substitution. Per-
//! iteration rows stream through a [`RowSink`] and are also collected
//! in the returned [`RunRecord`].

mod subproblem;

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::project_simplex;
use crate::linalg::{
    default_max_iter, lanczos_extreme, sym_eig_full, EigPairs, Side, SymMatVec, SymMatrix,
};
use crate::model::{
    gradient_dense, gradient_matvec, iterate_grad_inner, objective, smoothness_beta,
    IterateState, ProblemInstance, ReducedMeasurement, Repr,
};
use crate::sketch::{sketch_reconstruct, sketch_update, SketchFactors, SketchState};
use subproblem::{solve_block_apgd, ExactSub, FModelSub, GModelSub, SubResult};

/// Largest dimension at which a stalled iterative eigensolve falls back
/// to a dense decomposition instead of aborting.
const DENSE_FALLBACK_LIMIT: usize = 2000;

/// Seed offsets separating the independent random streams of one run,
/// so that e.g. the subproblem's draws never perturb the eigensolver's.
const LANCZOS_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const SUB_STREAM: u64 = 0x7f4a_7c15_9e37_79b9;
const SKETCH_STREAM: u64 = 0x5ce7_c4aa_0011_55aa;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Fw,
    Gblockfw,
    Specfw,
    Pgd,
    Apgd,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Fw => "fw",
            Algorithm::Gblockfw => "gblockfw",
            Algorithm::Specfw => "specfw",
            Algorithm::Pgd => "pgd",
            Algorithm::Apgd => "apgd",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fw" => Ok(Algorithm::Fw),
            "gblockfw" => Ok(Algorithm::Gblockfw),
            "specfw" => Ok(Algorithm::Specfw),
            "pgd" => Ok(Algorithm::Pgd),
            "apgd" => Ok(Algorithm::Apgd),
            other => Err(Error::parse(
                "algorithm",
                format!("unknown algorithm {other:?}; expected fw, gblockfw, specfw, pgd, or apgd"),
            )),
        }
    }
}

/// Back-end used for the spectral solver's per-iteration subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subproblem {
    /// Minimize the true objective on the face.
    Exact,
    /// Minimize the quadratic upper model of `g` (exact for quadratic
    /// `g`).
    GModel,
    /// Minimize the prox upper model of `f`; needs the dense iterate.
    FModel,
}

impl fmt::Display for Subproblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subproblem::Exact => "exact",
            Subproblem::GModel => "g_model",
            Subproblem::FModel => "f_model",
        })
    }
}

impl std::str::FromStr for Subproblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Subproblem::Exact),
            "g_model" => Ok(Subproblem::GModel),
            "f_model" => Ok(Subproblem::FModel),
            other => Err(Error::parse(
                "subproblem",
                format!("unknown subproblem {other:?}; expected exact, g_model, or f_model"),
            )),
        }
    }
}

/// Knobs shared by every solver; unused fields are ignored by
/// algorithms they do not apply to. `beta` is stated on the original
/// problem scale and is multiplied by `tau^2` internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Eigenvector count for the block and spectral solvers.
    pub k: usize,
    /// Fixed step of the block solver.
    pub eta: f64,
    /// Smoothness constant; estimated from the instance when absent.
    pub beta: Option<f64>,
    pub max_iters: usize,
    pub time_limit_s: Option<f64>,
    /// Stop when the Frank-Wolfe gap falls below this; default
    /// `1e-7 * max(1, |f(X0)|)`.
    pub gap_tol: Option<f64>,
    pub subproblem: Subproblem,
    /// Floor of the inner solver's gradient-mapping tolerance; the
    /// schedule `max(sub_tol, 1e-2 * gap)` loosens it early.
    pub sub_tol: f64,
    pub sub_max_iters: usize,
    pub lanczos_tol: f64,
    /// Replace the dense iterate by the streaming sketch (spectral and
    /// classical solvers only).
    pub use_sketch: bool,
    pub sketch_rank: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::Fw,
            k: 1,
            eta: 0.4,
            beta: None,
            max_iters: 1000,
            time_limit_s: None,
            gap_tol: None,
            subproblem: Subproblem::Exact,
            sub_tol: 1e-10,
            sub_max_iters: 500,
            lanczos_tol: 1e-9,
            use_sketch: false,
            sketch_rank: 8,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        SolverConfig {
            algorithm,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::config(format!(
                "eta must lie in (0, 1], got {}",
                self.eta
            )));
        }
        if self.max_iters == 0 || self.sub_max_iters == 0 {
            return Err(Error::config("iteration budgets must be positive"));
        }
        if !(self.sub_tol > 0.0) || !(self.lanczos_tol > 0.0) {
            return Err(Error::config("tolerances must be positive"));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::config(format!("beta must be positive, got {b}")));
            }
        }
        if let Some(g) = self.gap_tol {
            if !(g > 0.0) {
                return Err(Error::config(format!("gap_tol must be positive, got {g}")));
            }
        }
        if let Some(t) = self.time_limit_s {
            if !(t >= 0.0) {
                return Err(Error::config(format!(
                    "time limit must be nonnegative, got {t}"
                )));
            }
        }
        if self.use_sketch {
            match self.algorithm {
                Algorithm::Gblockfw | Algorithm::Pgd | Algorithm::Apgd => {
                    return Err(Error::config(format!(
                        "the {} solver operates on the dense iterate and does not support \
                         sketched mode",
                        self.algorithm
                    )));
                }
                Algorithm::Specfw if self.subproblem == Subproblem::FModel => {
                    return Err(Error::config(
                        "the f_model subproblem needs the dense iterate; use exact or g_model \
                         with sketching",
                    ));
                }
                _ => {}
            }
            if self.sketch_rank == 0 {
                return Err(Error::config("sketch rank must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Step constant for the block solver mirroring the quadratic-sensing
/// experiments: an original-scale override of `2.5 n^2`. The internal
/// unit-trace run with `tau^2 * beta` reproduces the original-scale
/// iteration exactly.
pub fn gblockfw_preset_beta(n: usize) -> f64 {
    2.5 * (n as f64).powi(2)
}

/// One logged iteration. `objective` and `fw_gap` describe the iterate
/// at the start of the step; `eta_hat` and `update_rank` describe the
/// step taken from it (a terminal row has `eta_hat = 1`,
/// `update_rank = 0`). `eigengap_est` estimates the gap between the
/// (k+1)-th and 1st smallest gradient eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRow {
    pub iter: usize,
    pub wall_time_s: f64,
    pub objective: f64,
    pub fw_gap: f64,
    pub eta_hat: f64,
    pub update_rank: usize,
    pub eigengap_est: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GapTolReached,
    MaxIters,
    TimeLimit,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::GapTolReached => "gap_tol",
            StopReason::MaxIters => "max_iters",
            StopReason::TimeLimit => "time_limit",
        })
    }
}

/// Final iterate of a run, already rescaled to the original trace
/// bound in the dense case; the sketched case stays on the internal
/// unit-trace scale and is rescaled during reconstruction.
#[derive(Debug, Clone)]
pub enum FinalIterate {
    Dense(SymMatrix),
    Sketched(SketchState),
}

/// Everything a run produced: the per-iteration rows, the final
/// iterate, and the constants needed to interpret them.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub rows: Vec<IterRow>,
    pub final_objective: f64,
    pub stop_reason: StopReason,
    pub iterate: FinalIterate,
    pub tau: f64,
    /// Smoothness constant on the original scale.
    pub beta: f64,
    /// `tau^2 * beta`, the constant appearing in the iteration bounds.
    pub beta_internal: f64,
    /// Outer iterations where the subproblem made no progress and the
    /// classical step was taken instead.
    pub fallback_iters: Vec<usize>,
}

impl RunRecord {
    pub fn final_dense(&self) -> Option<&SymMatrix> {
        match &self.iterate {
            FinalIterate::Dense(x) => Some(x),
            FinalIterate::Sketched(_) => None,
        }
    }

    /// Rank-r factors of the final iterate on the original scale, when
    /// the run was sketched.
    pub fn reconstruct_sketched(&self) -> Result<Option<SketchFactors>> {
        match &self.iterate {
            FinalIterate::Dense(_) => Ok(None),
            FinalIterate::Sketched(sk) => {
                let mut f = sketch_reconstruct(sk)?;
                f.sigma *= self.tau;
                Ok(Some(f))
            }
        }
    }
}

/// Receives each row as it is produced; the CLI streams CSV through
/// this.
pub trait RowSink {
    fn row(&mut self, row: &IterRow);
}

/// Discards rows (they are still collected in the record).
pub struct NoopSink;

impl RowSink for NoopSink {
    fn row(&mut self, _row: &IterRow) {}
}

/// Runs the configured algorithm on `inst`.
pub fn run(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunRecord> {
    run_with_sink(inst, cfg, &mut NoopSink)
}

/// Like [`run`], streaming rows through `sink` as they are produced.
pub fn run_with_sink(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    sink: &mut dyn RowSink,
) -> Result<RunRecord> {
    cfg.validate()?;
    crate::threads::init();
    match cfg.algorithm {
        Algorithm::Fw => fw_loop(inst, cfg, sink),
        Algorithm::Specfw => specfw_loop(inst, cfg, sink),
        Algorithm::Gblockfw => gblock_loop(inst, cfg, sink),
        Algorithm::Pgd => pg_loop(inst, cfg, sink, false),
        Algorithm::Apgd => pg_loop(inst, cfg, sink, true),
    }
}

fn expect_algorithm(cfg: &SolverConfig, want: Algorithm) -> Result<()> {
    if cfg.algorithm == want {
        Ok(())
    } else {
        Err(Error::config(format!(
            "config selects algorithm {}, but {} was invoked",
            cfg.algorithm, want
        )))
    }
}

pub fn fw_run(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunRecord> {
    expect_algorithm(cfg, Algorithm::Fw)?;
    run(inst, cfg)
}

pub fn gblockfw_run(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunRecord> {
    expect_algorithm(cfg, Algorithm::Gblockfw)?;
    run(inst, cfg)
}

pub fn specfw_run(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunRecord> {
    expect_algorithm(cfg, Algorithm::Specfw)?;
    run(inst, cfg)
}

pub fn pgd_run(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunRecord> {
    expect_algorithm(cfg, Algorithm::Pgd)?;
    run(inst, cfg)
}

pub fn apgd_run(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunRecord> {
    expect_algorithm(cfg, Algorithm::Apgd)?;
    run(inst, cfg)
}

// ---------------------------------------------------------------------------
// shared plumbing

struct Trace<'s> {
    start: Instant,
    rows: Vec<IterRow>,
    sink: &'s mut dyn RowSink,
}

impl<'s> Trace<'s> {
    fn new(sink: &'s mut dyn RowSink) -> Self {
        Trace {
            start: Instant::now(),
            rows: Vec::new(),
            sink,
        }
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn push(
        &mut self,
        iter: usize,
        objective: f64,
        fw_gap: f64,
        eta_hat: f64,
        update_rank: usize,
        eigengap_est: f64,
    ) {
        let row = IterRow {
            iter,
            wall_time_s: self.elapsed(),
            objective,
            fw_gap,
            eta_hat,
            update_rank,
            eigengap_est,
        };
        self.sink.row(&row);
        self.rows.push(row);
    }
}

fn resolve_beta(inst: &ProblemInstance, cfg: &SolverConfig) -> f64 {
    cfg.beta
        .unwrap_or_else(|| smoothness_beta(inst, None).value)
}

fn resolve_gap_tol(inst: &ProblemInstance, st: &IterateState, cfg: &SolverConfig) -> f64 {
    cfg.gap_tol
        .unwrap_or_else(|| 1e-7 * objective(inst, st).abs().max(1.0))
}

fn init_state(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<IterateState> {
    if cfg.use_sketch {
        IterateState::init_sketched(inst, cfg.sketch_rank, cfg.seed ^ SKETCH_STREAM)
    } else {
        Ok(IterateState::init_dense(inst))
    }
}

fn stop_check(
    t: usize,
    gap: f64,
    gap_tol: f64,
    cfg: &SolverConfig,
    elapsed: f64,
) -> Option<StopReason> {
    if gap <= gap_tol {
        Some(StopReason::GapTolReached)
    } else if t >= cfg.max_iters {
        Some(StopReason::MaxIters)
    } else if cfg.time_limit_s.is_some_and(|tl| elapsed >= tl) {
        Some(StopReason::TimeLimit)
    } else {
        None
    }
}

/// Last `ask` pairs of a full decomposition (the smallest end), order
/// preserved (non-increasing).
fn tail_pairs(full: &EigPairs, ask: usize) -> EigPairs {
    let n = full.values.len();
    EigPairs {
        values: DVector::from_fn(ask, |i, _| full.values[n - ask + i]),
        vectors: full.vectors.columns(n - ask, ask).into_owned(),
    }
}

/// `ask` smallest eigenpairs of the gradient operator, falling back to
/// a dense decomposition when the iterative solver stalls and the
/// dimension permits.
fn smallest_grad_eigs(
    inst: &ProblemInstance,
    st: &IterateState,
    op: &dyn SymMatVec,
    ask: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EigPairs> {
    let n = inst.n();
    match lanczos_extreme(op, ask, Side::Smallest, tol, default_max_iter(n, ask), rng) {
        Ok(e) => Ok(e),
        Err(e @ Error::Convergence { .. }) if n <= DENSE_FALLBACK_LIMIT => {
            log::warn!("eigensolver stalled ({e}); retrying with a dense decomposition");
            let g = gradient_dense(inst, st);
            Ok(tail_pairs(&sym_eig_full(&g)?, ask))
        }
        Err(e) => Err(e),
    }
}

/// Applies `X <- eta X + V S V^T` to the iterate representation and
/// installs the already-computed caches.
fn commit(
    st: &mut IterateState,
    v: &DMatrix<f64>,
    s: &SymMatrix,
    eta: f64,
    z_new: DVector<f64>,
    c_new: f64,
) -> Result<()> {
    st.z = z_new;
    st.c = c_new;
    match &mut st.repr {
        Repr::Dense(x) => *x = x.scale(eta).add(&SymMatrix::from_lowrank(v, s.as_matrix())),
        Repr::Sketch(sk) => sketch_update(sk, v, s.as_matrix(), eta)?,
    }
    st.iter += 1;
    Ok(())
}

/// Periodic cache-coherence audit on dense debug runs.
fn debug_audit(inst: &ProblemInstance, st: &IterateState, t: usize) -> Result<()> {
    if cfg!(debug_assertions) && t % 16 == 0 {
        st.check_coherence(inst, 1e-6)?;
    }
    Ok(())
}

/// `sym(V^T C V)`.
fn compress_sym(c: &SymMatrix, v: &DMatrix<f64>) -> SymMatrix {
    let cv = c.as_matrix() * v;
    SymMatrix::symmetrize(v.tr_mul(&cv)).expect("compression of finite inputs")
}

/// Numerical rank of a small PSD block on the unit-trace scale.
fn block_rank(s: &SymMatrix) -> Result<usize> {
    let eig = sym_eig_full(s)?;
    Ok(eig.values.iter().filter(|&&l| l > 1e-9).count())
}

#[allow(clippy::too_many_arguments)]
fn finalize(
    algorithm: Algorithm,
    inst: &ProblemInstance,
    st: IterateState,
    trace: Trace<'_>,
    stop_reason: StopReason,
    tau: f64,
    beta: f64,
    beta_internal: f64,
    fallback_iters: Vec<usize>,
) -> Result<RunRecord> {
    if cfg!(debug_assertions) {
        st.check_feasibility(inst)?;
    }
    let final_objective = trace.rows.last().map_or(f64::NAN, |r| r.objective);
    let iterate = match st.repr {
        Repr::Dense(x) => FinalIterate::Dense(x.scale(tau)),
        Repr::Sketch(sk) => FinalIterate::Sketched(sk),
    };
    Ok(RunRecord {
        algorithm,
        rows: trace.rows,
        final_objective,
        stop_reason,
        iterate,
        tau,
        beta,
        beta_internal,
        fallback_iters,
    })
}

// ---------------------------------------------------------------------------
// line search

/// Minimizes `f(eta X_t + (1 - eta) A)` over `eta` in `[0, 1]` for the
/// feasible atom `A = V S V^T` (so `eta = 1` keeps the current
/// iterate). Closed form for the built-in quadratic outer function,
/// golden-section search otherwise; exact ties break toward 1.
pub fn line_search_segment(
    inst: &ProblemInstance,
    st: &IterateState,
    v: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<f64> {
    if v.nrows() != inst.n() {
        return Err(Error::input(format!(
            "atom factor has {} rows, problem dimension is {}",
            v.nrows(),
            inst.n()
        )));
    }
    if s.shape() != (v.ncols(), v.ncols()) {
        return Err(Error::input("atom core block has inconsistent shape"));
    }
    let za = inst.map().apply_lowrank(v, s);
    let ca = inst.c_matrix().map_or(0.0, |c| {
        let small = compress_sym(c, v);
        small.as_matrix().zip_fold(s, 0.0, |acc, a, b| acc + a * b)
    });
    Ok(segment_min(inst, st, &za, ca))
}

/// Core of the line search with the atom's caches precomputed:
/// `za = A(atom)`, `ca = <C, atom>`.
fn segment_min(inst: &ProblemInstance, st: &IterateState, za: &DVector<f64>, ca: f64) -> f64 {
    let dc = st.c - ca;
    if let Some(y) = inst.outer().half_squared_target() {
        // phi(eta) = 1/2 ||e + eta d||^2 + ca + eta dc with
        // d = z - za, e = za - y.
        let d = &st.z - za;
        let e = za - y;
        let denom = d.norm_squared();
        let slope0 = e.dot(&d) + dc;
        if denom <= 1e-300 {
            // Linear in eta; ties keep the current iterate.
            return if slope0 > 0.0 { 0.0 } else { 1.0 };
        }
        return (-slope0 / denom).clamp(0.0, 1.0);
    }
    let phi = |eta: f64| {
        let zz = za + (&st.z - za) * eta;
        inst.outer().value(&zz) + ca + eta * dc
    };
    let inv = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c1 = b - inv * (b - a);
    let mut c2 = a + inv * (b - a);
    let mut f1 = phi(c1);
    let mut f2 = phi(c2);
    while b - a > 1e-8 {
        if f1 > f2 {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + inv * (b - a);
            f2 = phi(c2);
        } else {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - inv * (b - a);
            f1 = phi(c1);
        }
    }
    let mid = 0.5 * (a + b);
    let (p0, pm, p1) = (phi(0.0), phi(mid), phi(1.0));
    let slack = 1e-12 * p1.abs().max(1.0);
    if p1 <= pm.min(p0) + slack {
        1.0
    } else if pm <= p0 + slack {
        mid
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Frank-Wolfe gap

/// `<X, grad f(X)> - tau * lambda_min(grad f(X))`, evaluated from the
/// caches and one extreme eigenvalue; nonnegative up to the eigensolve
/// tolerance, zero exactly at optima.
pub fn fw_gap(inst: &ProblemInstance, st: &IterateState) -> Result<f64> {
    let gop = gradient_matvec(inst, st);
    let mut rng = ChaCha8Rng::seed_from_u64(0x00f3_0a11);
    let eig = smallest_grad_eigs(inst, st, &gop, 1, 1e-9, &mut rng)?;
    Ok(iterate_grad_inner(st, &gop.w) - inst.tau() * eig.values[0])
}

// ---------------------------------------------------------------------------
// subproblem entry points

fn require_unit_trace(inst: &ProblemInstance) -> Result<()> {
    if (inst.tau() - 1.0).abs() > 1e-12 {
        return Err(Error::config(
            "the block subproblem is stated for the unit-trace problem; rescale the instance \
             with rescaled_unit first",
        ));
    }
    Ok(())
}

fn check_frame(inst: &ProblemInstance, v: &DMatrix<f64>) -> Result<()> {
    if v.nrows() != inst.n() || v.ncols() == 0 {
        return Err(Error::input(format!(
            "frame is {}x{}, expected {}xk with k >= 1",
            v.nrows(),
            v.ncols(),
            inst.n()
        )));
    }
    Ok(())
}

/// Solves `min f(eta X_t + V S V^T)` over
/// `{eta >= 0, S psd, eta + tr S = 1}` for the unit-trace instance.
pub fn solve_subproblem_exact(
    inst: &ProblemInstance,
    st: &IterateState,
    v: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<(f64, SymMatrix)> {
    require_unit_trace(inst)?;
    check_frame(inst, v)?;
    let k = v.ncols();
    let red = inst.map().reduce(v);
    let vcv = inst.c_matrix().map(|c| compress_sym(c, v));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SUB_STREAM);
    let obj = ExactSub::new(
        inst.outer(),
        &st.z,
        st.c,
        red.as_ref(),
        vcv.as_ref(),
        k,
        &mut rng,
    );
    let r = solve_block_apgd(&obj, k, cfg.sub_tol, cfg.sub_max_iters, None)?;
    Ok((r.eta, r.s))
}

/// Same block set, minimizing the quadratic upper model of `g`
/// anchored at the current measurements.
pub fn solve_subproblem_g_model(
    inst: &ProblemInstance,
    st: &IterateState,
    v: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<(f64, SymMatrix)> {
    require_unit_trace(inst)?;
    check_frame(inst, v)?;
    let k = v.ncols();
    let red = inst.map().reduce(v);
    let vcv = inst.c_matrix().map(|c| compress_sym(c, v));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SUB_STREAM);
    let obj = GModelSub::new(
        inst.outer(),
        &st.z,
        st.c,
        red.as_ref(),
        vcv.as_ref(),
        k,
        &mut rng,
    );
    let r = solve_block_apgd(&obj, k, cfg.sub_tol, cfg.sub_max_iters, None)?;
    Ok((r.eta, r.s))
}

/// Same block set, minimizing the prox upper model of `f` anchored at
/// the dense iterate, with `L_f` taken from the smoothness constant.
pub fn solve_subproblem_f_model(
    inst: &ProblemInstance,
    st: &IterateState,
    v: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<(f64, SymMatrix)> {
    require_unit_trace(inst)?;
    check_frame(inst, v)?;
    let x = st.x_dense().ok_or_else(|| {
        Error::config("the f_model subproblem needs the dense iterate, not a sketch")
    })?;
    let k = v.ncols();
    let red = inst.map().reduce(v);
    let vcv = inst.c_matrix().map(|c| compress_sym(c, v));
    let w = inst.outer().grad(&st.z);
    let mut gk = red.compress_adjoint(&w);
    if let Some(m) = &vcv {
        gk = gk.add(m);
    }
    let p = compress_sym(x, v);
    let lf = resolve_beta(inst, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SUB_STREAM);
    let obj = FModelSub::new(
        objective(inst, st),
        iterate_grad_inner(st, &w),
        gk,
        p,
        x.frobenius_norm().powi(2),
        lf,
        &mut rng,
    );
    let r = solve_block_apgd(&obj, k, cfg.sub_tol, cfg.sub_max_iters, None)?;
    Ok((r.eta, r.s))
}

// ---------------------------------------------------------------------------
// classical Frank-Wolfe

fn fw_loop(
    inst0: &ProblemInstance,
    cfg: &SolverConfig,
    sink: &mut dyn RowSink,
) -> Result<RunRecord> {
    let inst = inst0.rescaled_unit();
    let tau = inst0.tau();
    let beta = resolve_beta(inst0, cfg);
    let beta_int = beta * tau * tau;
    let n = inst.n();
    let mut lrng = ChaCha8Rng::seed_from_u64(cfg.seed ^ LANCZOS_STREAM);
    let mut st = init_state(&inst, cfg)?;
    let gap_tol = resolve_gap_tol(&inst, &st, cfg);
    let mut trace = Trace::new(sink);
    let one = DMatrix::from_element(1, 1, 1.0);
    let stop;
    loop {
        let t = st.iter;
        let f_t = objective(&inst, &st);
        let gop = gradient_matvec(&inst, &st);
        let ask = 2.min(n);
        let eig = smallest_grad_eigs(&inst, &st, &gop, ask, cfg.lanczos_tol, &mut lrng)?;
        let lam_min = eig.values[ask - 1];
        let gap = iterate_grad_inner(&st, &gop.w) - lam_min;
        let egap = eig.values[0] - eig.values[ask - 1];
        if let Some(reason) = stop_check(t, gap, gap_tol, cfg, trace.elapsed()) {
            trace.push(t, f_t, gap, 1.0, 0, egap);
            stop = reason;
            break;
        }
        let v = eig.vectors.columns(ask - 1, 1).into_owned();
        let za = inst.map().apply_lowrank(&v, &one);
        let ca = inst.c_matrix().map_or(0.0, |c| {
            let col = v.column(0).clone_owned();
            c.apply(&col).dot(&col)
        });
        let eta_hat = segment_min(&inst, &st, &za, ca);
        let weight = 1.0 - eta_hat;
        let z_new = &st.z * eta_hat + &za * weight;
        let c_new = st.c * eta_hat + ca * weight;
        let s_small = SymMatrix::from_diagonal(&DVector::from_element(1, weight));
        commit(&mut st, &v, &s_small, eta_hat, z_new, c_new)?;
        trace.push(t, f_t, gap, eta_hat, usize::from(weight > 1e-12), egap);
        debug_audit(&inst, &st, t)?;
    }
    finalize(
        Algorithm::Fw,
        &inst,
        st,
        trace,
        stop,
        tau,
        beta,
        beta_int,
        Vec::new(),
    )
}

// ---------------------------------------------------------------------------
// spectral Frank-Wolfe

fn specfw_loop(
    inst0: &ProblemInstance,
    cfg: &SolverConfig,
    sink: &mut dyn RowSink,
) -> Result<RunRecord> {
    let inst = inst0.rescaled_unit();
    let tau = inst0.tau();
    let beta = resolve_beta(inst0, cfg);
    let beta_int = beta * tau * tau;
    let n = inst.n();
    let k = cfg.k.min(n);
    let mut lrng = ChaCha8Rng::seed_from_u64(cfg.seed ^ LANCZOS_STREAM);
    let mut srng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SUB_STREAM);
    let mut st = init_state(&inst, cfg)?;
    let gap_tol = resolve_gap_tol(&inst, &st, cfg);
    let mut trace = Trace::new(sink);
    let mut fallbacks = Vec::new();
    // Last accepted block solution with its frame; warm-starts the next
    // inner solve after re-expressing it in the new frame.
    let mut prev_block: Option<(f64, SymMatrix, DMatrix<f64>)> = None;
    let stop;
    loop {
        let t = st.iter;
        let f_t = objective(&inst, &st);
        let gop = gradient_matvec(&inst, &st);
        let ask = (k + 1).min(n);
        let eig = smallest_grad_eigs(&inst, &st, &gop, ask, cfg.lanczos_tol, &mut lrng)?;
        let lam_min = eig.values[ask - 1];
        let gap = iterate_grad_inner(&st, &gop.w) - lam_min;
        let egap = eig.values[0] - eig.values[ask - 1];
        if let Some(reason) = stop_check(t, gap, gap_tol, cfg, trace.elapsed()) {
            trace.push(t, f_t, gap, 1.0, 0, egap);
            stop = reason;
            break;
        }
        let v = eig.vectors.columns(ask - k, k).into_owned();
        let red = inst.map().reduce(&v);
        let vcv = inst.c_matrix().map(|c| compress_sym(c, &v));
        let sub_tol_t = cfg.sub_tol.max(1e-2 * gap.max(0.0));
        let warm = prev_block.as_ref().map(|(e, s, vo)| {
            let g = v.tr_mul(vo);
            let mapped = SymMatrix::symmetrize(&g * s.as_matrix() * g.transpose())
                .expect("frame change of finite block");
            (*e, mapped)
        });
        let sub = run_subproblem(
            &inst, &st, &v, red.as_ref(), vcv.as_ref(), cfg, k, sub_tol_t, f_t, beta_int,
            &gop.w, warm, &mut srng,
        )?;
        let z_cand = &st.z * sub.eta + red.apply(&sub.s);
        let c_cand = st.c * sub.eta + vcv.as_ref().map_or(0.0, |m| m.dot(&sub.s));
        let f_cand = inst.outer().value(&z_cand) + c_cand;
        if f_cand <= f_t {
            if !sub.converged {
                log::debug!(
                    "inner solver hit its budget ({} iterations) at outer iteration {t}; \
                     keeping its best point",
                    sub.iters
                );
            }
            let rank = block_rank(&sub.s)?;
            prev_block = Some((sub.eta, sub.s.clone(), v.clone()));
            commit(&mut st, &v, &sub.s, sub.eta, z_cand, c_cand)?;
            trace.push(t, f_t, gap, sub.eta, rank, egap);
        } else {
            // No progress from the block; classical step along the
            // smallest eigenvector keeps the outer guarantees.
            log::warn!("subproblem made no progress at outer iteration {t}; classical step taken");
            fallbacks.push(t);
            prev_block = None;
            let vlast = v.columns(k - 1, 1).into_owned();
            let mut e = DMatrix::zeros(k, k);
            e[(k - 1, k - 1)] = 1.0;
            let e = SymMatrix::new(e).expect("basis block is symmetric");
            let za = red.apply(&e);
            let ca = vcv.as_ref().map_or(0.0, |m| m.as_matrix()[(k - 1, k - 1)]);
            let eta_hat = segment_min(&inst, &st, &za, ca);
            let weight = 1.0 - eta_hat;
            let z_new = &st.z * eta_hat + &za * weight;
            let c_new = st.c * eta_hat + ca * weight;
            let s_small = SymMatrix::from_diagonal(&DVector::from_element(1, weight));
            commit(&mut st, &vlast, &s_small, eta_hat, z_new, c_new)?;
            trace.push(t, f_t, gap, eta_hat, usize::from(weight > 1e-12), egap);
        }
        debug_audit(&inst, &st, t)?;
    }
    finalize(
        Algorithm::Specfw,
        &inst,
        st,
        trace,
        stop,
        tau,
        beta,
        beta_int,
        fallbacks,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_subproblem(
    inst: &ProblemInstance,
    st: &IterateState,
    v: &DMatrix<f64>,
    red: &dyn ReducedMeasurement,
    vcv: Option<&SymMatrix>,
    cfg: &SolverConfig,
    k: usize,
    sub_tol: f64,
    f_t: f64,
    beta_int: f64,
    w: &DVector<f64>,
    warm: Option<(f64, SymMatrix)>,
    rng: &mut ChaCha8Rng,
) -> Result<SubResult> {
    match cfg.subproblem {
        Subproblem::Exact => {
            if k == 1 {
                // With one eigenvector the block set is the segment
                // [X, v v^T], whose minimizer the classical step
                // already computes in closed form. Using it keeps the
                // k = 1 run on the classical iterate sequence exactly,
                // not merely within the scheduled inner tolerance.
                let e = SymMatrix::scaled_identity(1, 1.0);
                let za = red.apply(&e);
                let ca = vcv.map_or(0.0, |m| m.as_matrix()[(0, 0)]);
                let eta = segment_min(inst, st, &za, ca);
                let weight = 1.0 - eta;
                let value = inst.outer().value(&(&st.z * eta + &za * weight))
                    + st.c * eta
                    + ca * weight;
                return Ok(SubResult {
                    eta,
                    s: SymMatrix::scaled_identity(1, weight),
                    value,
                    converged: true,
                    iters: 1,
                });
            }
            let obj = ExactSub::new(inst.outer(), &st.z, st.c, red, vcv, k, rng);
            solve_block_apgd(&obj, k, sub_tol, cfg.sub_max_iters, warm)
        }
        Subproblem::GModel => {
            let obj = GModelSub::new(inst.outer(), &st.z, st.c, red, vcv, k, rng);
            solve_block_apgd(&obj, k, sub_tol, cfg.sub_max_iters, warm)
        }
        Subproblem::FModel => {
            let x = st.x_dense().ok_or_else(|| {
                Error::config("the f_model subproblem needs the dense iterate, not a sketch")
            })?;
            let mut gk = red.compress_adjoint(w);
            if let Some(m) = vcv {
                gk = gk.add(m);
            }
            let obj = FModelSub::new(
                f_t,
                iterate_grad_inner(st, w),
                gk,
                compress_sym(x, v),
                x.frobenius_norm().powi(2),
                beta_int,
                rng,
            );
            solve_block_apgd(&obj, k, sub_tol, cfg.sub_max_iters, warm)
        }
    }
}

// ---------------------------------------------------------------------------
// block Frank-Wolfe

fn gblock_loop(
    inst0: &ProblemInstance,
    cfg: &SolverConfig,
    sink: &mut dyn RowSink,
) -> Result<RunRecord> {
    let inst = inst0.rescaled_unit();
    let tau = inst0.tau();
    let beta = resolve_beta(inst0, cfg);
    let beta_int = beta * tau * tau;
    let n = inst.n();
    let k = cfg.k.min(n);
    let eta = cfg.eta;
    let mut st = init_state(&inst, cfg)?;
    let gap_tol = resolve_gap_tol(&inst, &st, cfg);
    let mut trace = Trace::new(sink);
    let stop;
    loop {
        let t = st.iter;
        let f_t = objective(&inst, &st);
        let grad = gradient_dense(&inst, &st);
        let gfull = sym_eig_full(&grad)?;
        let lam_min = gfull.values[n - 1];
        let gap = iterate_grad_inner(&st, &inst.outer().grad(&st.z)) - lam_min;
        let egap = gfull.values[n - 1 - k.min(n - 1)] - gfull.values[n - 1];
        if let Some(reason) = stop_check(t, gap, gap_tol, cfg, trace.elapsed()) {
            trace.push(t, f_t, gap, 1.0, 0, egap);
            stop = reason;
            break;
        }
        let x = match &st.repr {
            Repr::Dense(x) => x,
            Repr::Sketch(_) => unreachable!("validate() rejects sketched block runs"),
        };
        let target = x.sub(&grad.scale(1.0 / (eta * beta_int)));
        let tfull = sym_eig_full(&target)?;
        let top_vals = DVector::from_fn(k, |i, _| tfull.values[i]);
        let vtop = tfull.vectors.columns(0, k).into_owned();
        let lam = project_simplex(&top_vals, 1.0)?;
        let update_rank = lam.iter().filter(|&&l| l > 1e-9).count();
        let z_new = &st.z * (1.0 - eta)
            + inst.map().apply_lowrank(&vtop, &DMatrix::from_diagonal(&lam)) * eta;
        let c_new = st.c * (1.0 - eta)
            + eta
                * inst.c_matrix().map_or(0.0, |c| {
                    let cv = c.as_matrix() * &vtop;
                    (0..k).map(|i| lam[i] * vtop.column(i).dot(&cv.column(i))).sum()
                });
        let s_commit = SymMatrix::from_diagonal(&(lam * eta));
        commit(&mut st, &vtop, &s_commit, 1.0 - eta, z_new, c_new)?;
        trace.push(t, f_t, gap, eta, update_rank, egap);
        debug_audit(&inst, &st, t)?;
    }
    finalize(
        Algorithm::Gblockfw,
        &inst,
        st,
        trace,
        stop,
        tau,
        beta,
        beta_int,
        Vec::new(),
    )
}

// ---------------------------------------------------------------------------
// projected gradient baselines

fn pg_loop(
    inst0: &ProblemInstance,
    cfg: &SolverConfig,
    sink: &mut dyn RowSink,
    accelerated: bool,
) -> Result<RunRecord> {
    let inst = inst0.rescaled_unit();
    let tau = inst0.tau();
    let beta = resolve_beta(inst0, cfg);
    let beta_int = beta * tau * tau;
    let n = inst.n();
    let mut lrng = ChaCha8Rng::seed_from_u64(cfg.seed ^ LANCZOS_STREAM);
    let mut st = init_state(&inst, cfg)?;
    let gap_tol = resolve_gap_tol(&inst, &st, cfg);
    let mut trace = Trace::new(sink);
    // Previous iterate for the momentum extrapolation.
    let mut prev: Option<(SymMatrix, DVector<f64>, f64)> = None;
    let mut t_mom = 1.0f64;
    let stop;
    loop {
        let t = st.iter;
        let f_t = objective(&inst, &st);
        let gop = gradient_matvec(&inst, &st);
        let ask = 2.min(n);
        let eig = smallest_grad_eigs(&inst, &st, &gop, ask, cfg.lanczos_tol, &mut lrng)?;
        let gap = iterate_grad_inner(&st, &gop.w) - eig.values[ask - 1];
        let egap = eig.values[0] - eig.values[ask - 1];
        if let Some(reason) = stop_check(t, gap, gap_tol, cfg, trace.elapsed()) {
            trace.push(t, f_t, gap, 1.0, 0, egap);
            stop = reason;
            break;
        }
        let x_curr = match &st.repr {
            Repr::Dense(x) => x.clone(),
            Repr::Sketch(_) => unreachable!("validate() rejects sketched projection runs"),
        };
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt());
        let om = if accelerated {
            (t_mom - 1.0) / t_next
        } else {
            0.0
        };
        let step = |y_x: &SymMatrix, y_z: &DVector<f64>| -> Result<(SymMatrix, DVector<f64>)> {
            let w = inst.outer().grad(y_z);
            let mut g = inst.map().adjoint_dense(&w);
            if let Some(c) = inst.c_matrix() {
                g = g.add(c);
            }
            let target = y_x.sub(&g.scale(1.0 / beta_int));
            let full = sym_eig_full(&target)?;
            let lam = project_simplex(&full.values, 1.0)?;
            let x_new = SymMatrix::from_lowrank(&full.vectors, &DMatrix::from_diagonal(&lam));
            Ok((x_new, lam))
        };
        let (mut x_next, mut lam) = match (&prev, om > 0.0) {
            (Some((px, pz, _)), true) => {
                let y_x = x_curr.add(&x_curr.sub(px).scale(om));
                let y_z = &st.z + (&st.z - pz) * om;
                step(&y_x, &y_z)?
            }
            _ => step(&x_curr, &st.z)?,
        };
        let mut z_next = inst.map().apply_dense(&x_next);
        let mut c_next = inst.c_matrix().map_or(0.0, |c| c.dot(&x_next));
        let f_next = inst.outer().value(&z_next) + c_next;
        if accelerated && f_next > f_t && om > 0.0 {
            // Momentum overshot: restart from the current iterate.
            t_mom = 1.0;
            let (rx, rlam) = step(&x_curr, &st.z)?;
            x_next = rx;
            lam = rlam;
            z_next = inst.map().apply_dense(&x_next);
            c_next = inst.c_matrix().map_or(0.0, |c| c.dot(&x_next));
        } else {
            t_mom = t_next;
        }
        let update_rank = lam.iter().filter(|&&l| l > 1e-9).count();
        prev = Some((x_curr, std::mem::replace(&mut st.z, z_next), st.c));
        st.c = c_next;
        st.repr = Repr::Dense(x_next);
        st.iter += 1;
        trace.push(t, f_t, gap, 1.0, update_rank, egap);
        debug_audit(&inst, &st, t)?;
    }
    finalize(
        if accelerated {
            Algorithm::Apgd
        } else {
            Algorithm::Pgd
        },
        &inst,
        st,
        trace,
        stop,
        tau,
        beta,
        beta_int,
        Vec::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::subproblem::{ExactSub, FModelSub, GModelSub, SubObjective};
    use super::*;
    use crate::model::{
        generate_quadratic_sensing, MeasurementMap, OuterFunction, SensingMap,
    };
    use rand::Rng;
    use std::str::FromStr;
    use std::sync::Arc;

    fn sensing(n: usize, r: usize, tau: f64, seed: u64) -> ProblemInstance {
        generate_quadratic_sensing(n, r, 0.5, tau, seed).unwrap()
    }

    /// Sensing instance with measurements shrunk by `alpha`, keeping
    /// absolute tolerances comfortable next to the inner solver's
    /// gap-proportional tolerance schedule.
    fn scaled_sensing(n: usize, r: usize, tau: f64, seed: u64, alpha: f64) -> ProblemInstance {
        let base = generate_quadratic_sensing(n, r, 0.5, tau, seed).unwrap();
        let y = base.outer().half_squared_target().unwrap() * alpha;
        let map = Arc::new(crate::model::ScaledMap::new(base.map_arc(), alpha));
        ProblemInstance::new(OuterFunction::half_squared_distance(y), map, None, tau, None)
            .unwrap()
    }

    /// `f(X) = <diag(1,2,3), X>`: minimum `tau` at `tau e1 e1^T`.
    fn linear_toy() -> ProblemInstance {
        let map = Arc::new(SensingMap::from_vectors(DMatrix::zeros(3, 0)).unwrap());
        let c = SymMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        ProblemInstance::new(
            OuterFunction::half_squared_distance(DVector::zeros(0)),
            map,
            Some(c),
            1.0,
            None,
        )
        .unwrap()
    }

    /// `f` identically zero.
    fn zero_toy(n: usize) -> ProblemInstance {
        let map = Arc::new(SensingMap::from_vectors(DMatrix::zeros(n, 0)).unwrap());
        ProblemInstance::new(
            OuterFunction::half_squared_distance(DVector::zeros(0)),
            map,
            None,
            1.0,
            None,
        )
        .unwrap()
    }

    /// Exact smoothness constant of a sensing instance: the largest
    /// eigenvalue of the Gram matrix `M_ij = (a_i . a_j)^2`.
    fn exact_beta(inst: &ProblemInstance) -> f64 {
        let a = inst.map().as_sensing().unwrap().vectors().clone();
        let gram = a.tr_mul(&a);
        let m = gram.map(|x| x * x);
        m.symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn random_orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        use rand_distr::StandardNormal;
        let m = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = m.qr();
        qr.q().columns(0, k).into_owned()
    }

    /// Unit-trace state nudged off the scaled identity by one rank-one
    /// step, with coherent caches.
    fn displaced_state(inst: &ProblemInstance, seed: u64) -> IterateState {
        let mut st = IterateState::init_dense(inst);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_orthonormal(inst.n(), 1, &mut rng);
        let eta = 0.7;
        let w = inst.tau() * (1.0 - eta);
        let za = inst.map().apply_lowrank(&v, &DMatrix::from_element(1, 1, 1.0));
        let col = v.column(0).clone_owned();
        let ca = inst.c_matrix().map_or(0.0, |c| c.apply(&col).dot(&col));
        let z_new = &st.z * eta + &za * w;
        let c_new = st.c * eta + ca * w;
        commit(
            &mut st,
            &v,
            &SymMatrix::from_diagonal(&DVector::from_element(1, w)),
            eta,
            z_new,
            c_new,
        )
        .unwrap();
        st.check_coherence(inst, 1e-8).unwrap();
        st
    }

    #[test]
    fn config_default_round_trips_through_json() {
        let cfg = SolverConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        let back: SolverConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(cfg, back);
        // Partial documents pick up defaults; unknown keys are errors.
        let partial: SolverConfig =
            serde_json::from_str(r#"{"algorithm":"specfw","k":4}"#).unwrap();
        assert_eq!(partial.algorithm, Algorithm::Specfw);
        assert_eq!(partial.k, 4);
        assert_eq!(partial.eta, 0.4);
        assert!(serde_json::from_str::<SolverConfig>(r#"{"algoritm":"fw"}"#).is_err());
    }

    #[test]
    fn enum_names_round_trip() {
        for a in [
            Algorithm::Fw,
            Algorithm::Gblockfw,
            Algorithm::Specfw,
            Algorithm::Pgd,
            Algorithm::Apgd,
        ] {
            assert_eq!(Algorithm::from_str(&a.to_string()).unwrap(), a);
        }
        for s in [Subproblem::Exact, Subproblem::GModel, Subproblem::FModel] {
            assert_eq!(Subproblem::from_str(&s.to_string()).unwrap(), s);
        }
        assert!(Algorithm::from_str("newton").is_err());
        assert!(Subproblem::from_str("exactly").is_err());
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let bad = |f: fn(&mut SolverConfig)| {
            let mut c = SolverConfig::default();
            f(&mut c);
            assert!(
                matches!(c.validate(), Err(Error::Config(_))),
                "expected config rejection for {c:?}"
            );
        };
        bad(|c| c.k = 0);
        bad(|c| c.eta = 0.0);
        bad(|c| c.eta = 1.5);
        bad(|c| c.sub_tol = 0.0);
        bad(|c| c.lanczos_tol = -1.0);
        bad(|c| c.max_iters = 0);
        bad(|c| c.beta = Some(-2.0));
        bad(|c| c.gap_tol = Some(0.0));
        bad(|c| c.time_limit_s = Some(-1.0));
        bad(|c| {
            c.algorithm = Algorithm::Gblockfw;
            c.use_sketch = true;
        });
        bad(|c| {
            c.algorithm = Algorithm::Pgd;
            c.use_sketch = true;
        });
        bad(|c| {
            c.algorithm = Algorithm::Specfw;
            c.subproblem = Subproblem::FModel;
            c.use_sketch = true;
        });
        let mut ok = SolverConfig::new(Algorithm::Specfw);
        ok.use_sketch = true;
        ok.validate().unwrap();
    }

    #[test]
    fn wrappers_reject_mismatched_algorithm() {
        let inst = linear_toy();
        let cfg = SolverConfig::new(Algorithm::Specfw);
        assert!(matches!(fw_run(&inst, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn fw_solves_linear_toy_exactly() {
        let inst = linear_toy();
        let mut cfg = SolverConfig::new(Algorithm::Fw);
        cfg.max_iters = 50;
        let rec = fw_run(&inst, &cfg).unwrap();
        assert_eq!(rec.stop_reason, StopReason::GapTolReached);
        assert!((rec.final_objective - 1.0).abs() <= 1e-9, "{}", rec.final_objective);
        let x = rec.final_dense().unwrap();
        let mut e1 = SymMatrix::zeros(3).as_matrix().clone();
        e1[(0, 0)] = 1.0;
        assert!((x.as_matrix() - e1).norm() <= 1e-7);
        // Terminal row semantics.
        let last = rec.rows.last().unwrap();
        assert_eq!(last.eta_hat, 1.0);
        assert_eq!(last.update_rank, 0);
    }

    #[test]
    fn fw_and_specfw_monotone_with_sublinear_bound() {
        let inst = sensing(12, 2, 0.5, 7);
        let beta = exact_beta(&inst);
        let mut base = SolverConfig::new(Algorithm::Fw);
        base.beta = Some(beta);
        base.max_iters = 150;
        base.gap_tol = Some(1e-13);
        let mut spec = base.clone();
        spec.algorithm = Algorithm::Specfw;
        spec.k = 3;
        let runs = [run(&inst, &base).unwrap(), run(&inst, &spec).unwrap()];
        let f_best = runs
            .iter()
            .map(|r| r.final_objective)
            .fold(f64::INFINITY, f64::min);
        for rec in &runs {
            for w in rec.rows.windows(2) {
                assert!(
                    w[1].objective <= w[0].objective + 1e-10,
                    "objective increased: {} -> {}",
                    w[0].objective,
                    w[1].objective
                );
            }
            for row in rec.rows.iter().filter(|r| r.iter >= 1) {
                let bound = 8.0 * rec.beta_internal / row.iter as f64 + 1e-9;
                assert!(
                    row.objective - f_best <= bound,
                    "iter {}: h = {} > {}",
                    row.iter,
                    row.objective - f_best,
                    bound
                );
            }
        }
    }

    #[test]
    fn line_search_matches_grid_on_sensing_toy() {
        let inst = sensing(3, 1, 1.0, 21);
        let st = displaced_state(&inst, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_orthonormal(3, 1, &mut rng);
        let one = DMatrix::from_element(1, 1, 1.0);
        let eta_hat = line_search_segment(&inst, &st, &v, &one).unwrap();
        let za = inst.map().apply_lowrank(&v, &one);
        let col = v.column(0).clone_owned();
        let ca = inst.c_matrix().map_or(0.0, |c| c.apply(&col).dot(&col));
        let phi = |eta: f64| {
            let zz = &za + (&st.z - &za) * eta;
            inst.outer().value(&zz) + ca + eta * (st.c - ca)
        };
        let grid = (0..=4000).map(|i| i as f64 / 4000.0);
        let eta_grid = grid
            .min_by(|&a, &b| phi(a).partial_cmp(&phi(b)).unwrap())
            .unwrap();
        assert!(
            (eta_hat - eta_grid).abs() <= 5e-4,
            "line search {eta_hat} vs grid {eta_grid}"
        );
        // Interior minimizer: the 1-D derivative vanishes.
        if eta_hat > 1e-6 && eta_hat < 1.0 - 1e-6 {
            let d = &st.z - &za;
            let zz = &za + &d * eta_hat;
            let deriv = inst.outer().grad(&zz).dot(&d) + (st.c - ca);
            assert!(deriv.abs() <= 1e-8 * d.norm_squared().max(1.0), "{deriv}");
        }
    }

    #[test]
    fn line_search_ties_break_toward_one() {
        let inst = zero_toy(4);
        let st = IterateState::init_dense(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_orthonormal(4, 1, &mut rng);
        let eta = line_search_segment(&inst, &st, &v, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_eq!(eta, 1.0);
    }

    #[test]
    fn line_search_golden_section_matches_grid_for_custom_g() {
        // Quartic outer function exercises the derivative-free path.
        let n = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand_distr::StandardNormal;
        let a_t = DMatrix::from_fn(n, 9, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(9, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y2 = y.clone();
        let outer = OuterFunction::custom(
            move |z| z.iter().zip(y.iter()).map(|(zi, yi)| 0.25 * (zi - yi).powi(4)).sum(),
            move |z| {
                DVector::from_fn(z.len(), |i, _| (z[i] - y2[i]).powi(3))
            },
            50.0,
            0.0,
        );
        let inst = ProblemInstance::new(
            outer,
            Arc::new(SensingMap::from_vectors(a_t).unwrap()),
            None,
            1.0,
            None,
        )
        .unwrap();
        let st = displaced_state(&inst, 9);
        let v = random_orthonormal(n, 1, &mut rng);
        let one = DMatrix::from_element(1, 1, 1.0);
        let eta_hat = line_search_segment(&inst, &st, &v, &one).unwrap();
        let za = inst.map().apply_lowrank(&v, &one);
        let phi = |eta: f64| {
            let zz = &za + (&st.z - &za) * eta;
            inst.outer().value(&zz)
        };
        let eta_grid = (0..=4000)
            .map(|i| i as f64 / 4000.0)
            .min_by(|&a, &b| phi(a).partial_cmp(&phi(b)).unwrap())
            .unwrap();
        assert!(
            (eta_hat - eta_grid).abs() <= 5e-4,
            "golden {eta_hat} vs grid {eta_grid}"
        );
    }

    #[test]
    fn line_search_rejects_shape_mismatch() {
        let inst = linear_toy();
        let st = IterateState::init_dense(&inst);
        let v = DMatrix::zeros(2, 1);
        assert!(matches!(
            line_search_segment(&inst, &st, &v, &DMatrix::from_element(1, 1, 1.0)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn specfw_with_k1_tracks_fw() {
        let inst = scaled_sensing(10, 2, 0.5, 3, 1e-3);
        let mut fw_cfg = SolverConfig::new(Algorithm::Fw);
        fw_cfg.max_iters = 50;
        fw_cfg.gap_tol = Some(1e-15);
        let mut sp_cfg = fw_cfg.clone();
        sp_cfg.algorithm = Algorithm::Specfw;
        sp_cfg.k = 1;
        sp_cfg.sub_tol = 1e-12;
        sp_cfg.sub_max_iters = 2000;
        let a = run(&inst, &fw_cfg).unwrap();
        let b = run(&inst, &sp_cfg).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            let scale = ra.objective.abs().max(1.0);
            assert!(
                (ra.objective - rb.objective).abs() <= 1e-6 * scale,
                "iter {}: {} vs {}",
                ra.iter,
                ra.objective,
                rb.objective
            );
        }
        assert!(b.fallback_iters.is_empty());
    }

    #[test]
    fn subproblem_gradients_match_finite_differences() {
        let inst = sensing(8, 2, 1.0, 13);
        let st = displaced_state(&inst, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let k = 3;
        let v = random_orthonormal(8, k, &mut rng);
        let red = inst.map().reduce(&v);
        let vcv = inst.c_matrix().map(|c| compress_sym(c, &v));
        let w = inst.outer().grad(&st.z);
        let x = st.x_dense().unwrap();
        let mut gk = red.compress_adjoint(&w);
        if let Some(m) = &vcv {
            gk = gk.add(m);
        }
        let exact = ExactSub::new(inst.outer(), &st.z, st.c, red.as_ref(), vcv.as_ref(), k, &mut rng);
        let gmodel =
            GModelSub::new(inst.outer(), &st.z, st.c, red.as_ref(), vcv.as_ref(), k, &mut rng);
        let fmodel = FModelSub::new(
            objective(&inst, &st),
            iterate_grad_inner(&st, &w),
            gk,
            compress_sym(x, &v),
            x.frobenius_norm().powi(2),
            2.5,
            &mut rng,
        );
        let objs: [&dyn SubObjective; 3] = [&exact, &gmodel, &fmodel];
        use rand_distr::StandardNormal;
        for obj in objs {
            // A feasible base point and a random pair direction.
            let s0 = SymMatrix::symmetrize(DMatrix::from_fn(k, k, |_, _| {
                rng.sample::<f64, _>(StandardNormal)
            }))
            .unwrap();
            let (eta0, s0) = crate::geometry::project_eta_block(0.4, &s0, 1.0).unwrap();
            let da: f64 = rng.sample(StandardNormal);
            let ds = SymMatrix::symmetrize(DMatrix::from_fn(k, k, |_, _| {
                rng.sample::<f64, _>(StandardNormal)
            }))
            .unwrap();
            let (g_eta, g_s) = obj.grad(eta0, &s0);
            let analytic = g_eta * da + g_s.dot(&ds);
            let h = 1e-6;
            let plus = obj.value(eta0 + h * da, &s0.add(&ds.scale(h)));
            let minus = obj.value(eta0 - h * da, &s0.sub(&ds.scale(h)));
            let fd = (plus - minus) / (2.0 * h);
            assert!(
                (analytic - fd).abs() <= 1e-5 * analytic.abs().max(1.0),
                "directional derivative {analytic} vs finite difference {fd}"
            );
        }
    }

    #[test]
    fn subproblem_exact_with_k1_matches_line_search() {
        let inst = sensing(8, 2, 1.0, 29);
        let st = displaced_state(&inst, 31);
        let gop = gradient_matvec(&inst, &st);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eig = smallest_grad_eigs(&inst, &st, &gop, 1, 1e-10, &mut rng).unwrap();
        let v = eig.vectors.columns(0, 1).into_owned();
        let mut cfg = SolverConfig::new(Algorithm::Specfw);
        cfg.sub_tol = 1e-12;
        cfg.sub_max_iters = 5000;
        let (eta_hat, s_hat) = solve_subproblem_exact(&inst, &st, &v, &cfg).unwrap();
        let eta_line =
            line_search_segment(&inst, &st, &v, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!(
            (eta_hat - eta_line).abs() <= 1e-6,
            "block {eta_hat} vs segment {eta_line}"
        );
        assert!((s_hat.as_matrix()[(0, 0)] - (1.0 - eta_line)).abs() <= 1e-6);
    }

    #[test]
    fn subproblem_exact_returns_anchor_when_current_point_optimal() {
        // At the linear toy's optimum the subproblem over any frame
        // containing only ascent directions keeps (1, 0).
        let inst = linear_toy();
        let mut cfg = SolverConfig::new(Algorithm::Fw);
        cfg.max_iters = 50;
        let rec = fw_run(&inst, &cfg).unwrap();
        let x = rec.final_dense().unwrap().clone();
        let z = inst.map().apply_dense(&x);
        let c = inst.c_matrix().unwrap().dot(&x);
        let st = IterateState {
            repr: Repr::Dense(x),
            z,
            c,
            iter: 0,
        };
        let v = DMatrix::from_fn(3, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let mut scfg = SolverConfig::new(Algorithm::Specfw);
        scfg.sub_tol = 1e-12;
        let (eta_hat, s_hat) = solve_subproblem_exact(&inst, &st, &v, &scfg).unwrap();
        // eta + s = 1 with the mass on the same rank-one face; the
        // objective value is what must not move.
        let f_val = inst.outer().value(&(&st.z * eta_hat
            + inst.map().apply_lowrank(&v, s_hat.as_matrix())))
            + eta_hat * st.c
            + compress_sym(inst.c_matrix().unwrap(), &v).dot(&s_hat);
        assert!((f_val - rec.final_objective).abs() <= 1e-9);
    }

    #[test]
    fn subproblem_exact_k2_matches_parameter_grid() {
        let inst = scaled_sensing(4, 2, 1.0, 37, 0.1);
        let st = displaced_state(&inst, 41);
        let gop = gradient_matvec(&inst, &st);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eig = smallest_grad_eigs(&inst, &st, &gop, 2, 1e-10, &mut rng).unwrap();
        let v = eig.vectors.columns(0, 2).into_owned();
        let mut cfg = SolverConfig::new(Algorithm::Specfw);
        cfg.sub_tol = 1e-12;
        cfg.sub_max_iters = 5000;
        let (eta_hat, s_hat) = solve_subproblem_exact(&inst, &st, &v, &cfg).unwrap();
        let red = inst.map().reduce(&v);
        let value = |eta: f64, s: &SymMatrix| {
            inst.outer().value(&(&st.z * eta + red.apply(s))) + eta * st.c
        };
        let f_apgd = value(eta_hat, &s_hat);
        // S = (1 - eta) R(theta) diag(p, 1-p) R(theta)^T over a 50^3 grid.
        let mut f_grid = f64::INFINITY;
        for ie in 0..50 {
            let eta = ie as f64 / 49.0;
            for it in 0..50 {
                let th = std::f64::consts::PI * it as f64 / 49.0;
                let (cth, sth) = (th.cos(), th.sin());
                for ip in 0..50 {
                    let p = ip as f64 / 49.0;
                    let (l1, l2) = ((1.0 - eta) * p, (1.0 - eta) * (1.0 - p));
                    let s = SymMatrix::symmetrize(DMatrix::from_fn(2, 2, |i, j| {
                        let r = |r_i: usize, c_i: usize| -> f64 {
                            match (r_i, c_i) {
                                (0, 0) => cth,
                                (0, 1) => -sth,
                                (1, 0) => sth,
                                _ => cth,
                            }
                        };
                        l1 * r(i, 0) * r(j, 0) + l2 * r(i, 1) * r(j, 1)
                    }))
                    .unwrap();
                    let f = value(eta, &s);
                    if f < f_grid {
                        f_grid = f;
                    }
                }
            }
        }
        assert!(
            (f_apgd - f_grid).abs() <= 1e-3 * f_grid.abs().max(1.0),
            "block solver {f_apgd} vs grid {f_grid}"
        );
        assert!(f_apgd <= f_grid + 1e-9, "grid beat the solver");
    }

    #[test]
    fn subproblem_inner_loop_adapts_to_flat_curvature() {
        use super::subproblem::SubObjective;

        // Quadratic with curvature 1e5 in eta but only 1e-3 in S; a
        // fixed 1/L step would need ~1e4 iterations along the flat
        // directions, so finishing inside the budget exercises the
        // adaptive step. The unconstrained minimum (0.3, 0.35 I) lies
        // on the affine slice eta + tr S = 1.
        struct Valley;
        impl SubObjective for Valley {
            fn value(&self, eta: f64, s: &SymMatrix) -> f64 {
                let d = s.sub(&SymMatrix::scaled_identity(2, 0.35));
                5e4 * (eta - 0.3) * (eta - 0.3) + 5e-4 * d.frobenius_norm().powi(2)
            }
            fn grad(&self, eta: f64, s: &SymMatrix) -> (f64, SymMatrix) {
                let d = s.sub(&SymMatrix::scaled_identity(2, 0.35));
                (1e5 * (eta - 0.3), d.scale(1e-3))
            }
            fn lipschitz(&self) -> f64 {
                1e5
            }
        }

        let r = solve_block_apgd(&Valley, 2, 1e-8, 300, None).unwrap();
        assert!(r.converged, "no convergence in {} iterations", r.iters);
        let anchor = Valley.value(1.0, &SymMatrix::zeros(2));
        assert!(r.value <= anchor, "worse than the anchor");
        assert!(
            (Valley.value(r.eta, &r.s) - r.value).abs() <= 1e-12 * anchor,
            "reported value disagrees with the point"
        );
        assert!(r.eta >= 0.0 && (r.eta + r.s.trace() - 1.0).abs() <= 1e-9);
        let s_eigs = sym_eig_full(&r.s).unwrap();
        assert!(s_eigs.values[r.s.n() - 1] >= -1e-12, "S left the cone");
        assert!((r.eta - 0.3).abs() <= 1e-4, "eta {} far from 0.3", r.eta);
        assert!(
            r.s.sub(&SymMatrix::scaled_identity(2, 0.35)).frobenius_norm() <= 1e-4,
            "S missed the flat minimum"
        );
    }

    #[test]
    fn subproblem_g_model_matches_exact_for_quadratic_g() {
        let inst = sensing(6, 2, 1.0, 43);
        let st = displaced_state(&inst, 47);
        let gop = gradient_matvec(&inst, &st);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eig = smallest_grad_eigs(&inst, &st, &gop, 3, 1e-10, &mut rng).unwrap();
        let v = eig.vectors.columns(0, 3).into_owned();
        let mut cfg = SolverConfig::new(Algorithm::Specfw);
        cfg.sub_tol = 1e-13;
        cfg.sub_max_iters = 20000;
        let (ee, se) = solve_subproblem_exact(&inst, &st, &v, &cfg).unwrap();
        let (eg, sg) = solve_subproblem_g_model(&inst, &st, &v, &cfg).unwrap();
        assert!((ee - eg).abs() <= 1e-6, "eta {ee} vs {eg}");
        assert!(se.sub(&sg).frobenius_norm() <= 1e-6);
    }

    #[test]
    fn subproblem_g_model_anchor_value_is_current_objective() {
        let inst = sensing(6, 2, 1.0, 53);
        let st = displaced_state(&inst, 59);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = random_orthonormal(6, 2, &mut rng);
        let red = inst.map().reduce(&v);
        let vcv = inst.c_matrix().map(|c| compress_sym(c, &v));
        let gm = GModelSub::new(inst.outer(), &st.z, st.c, red.as_ref(), vcv.as_ref(), 2, &mut rng);
        let anchor = gm.value(1.0, &SymMatrix::zeros(2));
        assert!((anchor - objective(&inst, &st)).abs() <= 1e-12);
    }

    #[test]
    fn subproblem_g_model_keeps_anchor_at_zero_gradient() {
        // g minimized at the current measurements and no linear term:
        // (1, 0) is optimal and the tie-break keeps it.
        let n = 5;
        let inst0 = sensing(n, 2, 1.0, 61);
        let st0 = IterateState::init_dense(&inst0);
        let y = st0.z.clone();
        let inst = ProblemInstance::new(
            OuterFunction::half_squared_distance(y),
            inst0.map_arc(),
            None,
            1.0,
            None,
        )
        .unwrap();
        let st = IterateState::init_dense(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_orthonormal(n, 2, &mut rng);
        let mut cfg = SolverConfig::new(Algorithm::Specfw);
        cfg.sub_tol = 1e-12;
        let (eta_hat, s_hat) = solve_subproblem_g_model(&inst, &st, &v, &cfg).unwrap();
        assert!((eta_hat - 1.0).abs() <= 1e-9);
        assert!(s_hat.frobenius_norm() <= 1e-9);
    }

    /// Measurement map listing an orthonormal basis of the symmetric
    /// matrices, so `A* A = id` and the prox model of `f` is exact for
    /// the quadratic outer function with `beta = 1`.
    struct SvecMap {
        n: usize,
        pairs: Vec<(usize, usize)>,
    }

    impl SvecMap {
        fn new(n: usize) -> Self {
            let pairs = (0..n)
                .flat_map(|i| (i..n).map(move |j| (i, j)))
                .collect();
            SvecMap { n, pairs }
        }
    }

    impl MeasurementMap for SvecMap {
        fn n(&self) -> usize {
            self.n
        }

        fn m(&self) -> usize {
            self.pairs.len()
        }

        fn apply_dense(&self, x: &SymMatrix) -> DVector<f64> {
            DVector::from_fn(self.pairs.len(), |p, _| {
                let (i, j) = self.pairs[p];
                let w = if i == j { 1.0 } else { 2f64.sqrt() };
                w * x.as_matrix()[(i, j)]
            })
        }

        fn apply_lowrank(&self, v: &DMatrix<f64>, s: &DMatrix<f64>) -> DVector<f64> {
            self.apply_dense(&SymMatrix::from_lowrank(v, s))
        }

        fn adjoint_matvec(&self, w: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
            self.adjoint_dense(w).apply(x)
        }

        fn adjoint_dense(&self, w: &DVector<f64>) -> SymMatrix {
            let mut m = DMatrix::zeros(self.n, self.n);
            for (p, &(i, j)) in self.pairs.iter().enumerate() {
                if i == j {
                    m[(i, i)] = w[p];
                } else {
                    m[(i, j)] = w[p] / 2f64.sqrt();
                    m[(j, i)] = m[(i, j)];
                }
            }
            SymMatrix::new(m).unwrap()
        }

        fn op_norm_exact(&self) -> Option<f64> {
            Some(1.0)
        }
    }

    fn isometry_instance(n: usize, seed: u64) -> ProblemInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_orthonormal(n, 2, &mut rng);
        let lam = DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 0.3]));
        let x_star = SymMatrix::from_lowrank(&v, &lam);
        let map = Arc::new(SvecMap::new(n));
        let y = map.apply_dense(&x_star);
        ProblemInstance::new(OuterFunction::half_squared_distance(y), map, None, 1.0, None)
            .unwrap()
    }

    #[test]
    fn subproblem_f_model_matches_exact_when_model_tight() {
        let inst = isometry_instance(4, 67);
        let st = displaced_state(&inst, 71);
        let gop = gradient_matvec(&inst, &st);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eig = smallest_grad_eigs(&inst, &st, &gop, 2, 1e-10, &mut rng).unwrap();
        let v = eig.vectors.columns(0, 2).into_owned();
        let mut cfg = SolverConfig::new(Algorithm::Specfw);
        cfg.sub_tol = 1e-13;
        cfg.sub_max_iters = 20000;
        cfg.beta = Some(1.0);
        let (ee, se) = solve_subproblem_exact(&inst, &st, &v, &cfg).unwrap();
        let (ef, sf) = solve_subproblem_f_model(&inst, &st, &v, &cfg).unwrap();
        assert!((ee - ef).abs() <= 1e-4, "eta {ee} vs {ef}");
        assert!(se.sub(&sf).frobenius_norm() <= 1e-4);
    }

    #[test]
    fn subproblem_f_model_anchor_and_descent_direction() {
        let inst = isometry_instance(5, 73);
        let st = IterateState::init_dense(&inst);
        let f0 = objective(&inst, &st);
        let w = inst.outer().grad(&st.z);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Frame spanning the optimum's range: one prox step strictly
        // descends from the scaled identity.
        let y = inst.outer().half_squared_target().unwrap();
        let x_star = inst.map().adjoint_dense(&(y.clone()));
        let top = sym_eig_full(&x_star).unwrap();
        let v = top.vectors.columns(0, 2).into_owned();
        let red = inst.map().reduce(&v);
        let x = st.x_dense().unwrap();
        let fm = FModelSub::new(
            f0,
            iterate_grad_inner(&st, &w),
            red.compress_adjoint(&w),
            compress_sym(x, &v),
            x.frobenius_norm().powi(2),
            1.0,
            &mut rng,
        );
        assert!((fm.value(1.0, &SymMatrix::zeros(2)) - f0).abs() <= 1e-12);
        let mut cfg = SolverConfig::new(Algorithm::Specfw);
        cfg.beta = Some(1.0);
        let (eta_hat, s_hat) = solve_subproblem_f_model(&inst, &st, &v, &cfg).unwrap();
        let z_new = &st.z * eta_hat + red.apply(&s_hat);
        assert!(inst.outer().value(&z_new) < f0 - 1e-6);
    }

    #[test]
    fn subproblem_entry_points_require_unit_trace() {
        let inst = sensing(5, 1, 0.5, 79);
        let st = IterateState::init_dense(&inst);
        let v = DMatrix::identity(5, 1);
        let cfg = SolverConfig::new(Algorithm::Specfw);
        for r in [
            solve_subproblem_exact(&inst, &st, &v, &cfg),
            solve_subproblem_g_model(&inst, &st, &v, &cfg),
            solve_subproblem_f_model(&inst, &st, &v, &cfg),
        ] {
            assert!(matches!(r, Err(Error::Config(_))));
        }
    }

    #[test]
    fn gblockfw_stops_cleanly_at_stationary_start() {
        // f identically zero: the gradient vanishes at the start, the
        // gap is zero, and the run halts with the start untouched.
        let inst = zero_toy(4);
        let mut cfg = SolverConfig::new(Algorithm::Gblockfw);
        cfg.k = 2;
        cfg.beta = Some(1.0);
        let rec = gblockfw_run(&inst, &cfg).unwrap();
        assert_eq!(rec.stop_reason, StopReason::GapTolReached);
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.final_objective, 0.0);
        let x = rec.final_dense().unwrap();
        assert!((x.trace() - 1.0).abs() <= 1e-12);
        // The step the solver would have taken from a zero gradient:
        // eig target equals the iterate; the projected top-k spectrum
        // rebuilds a feasible point with the objective unchanged.
        let target = x.clone();
        let full = sym_eig_full(&target).unwrap();
        let top = DVector::from_fn(2, |i, _| full.values[i]);
        let lam = project_simplex(&top, 1.0).unwrap();
        let vtop = full.vectors.columns(0, 2).into_owned();
        let x1 = x
            .scale(1.0 - cfg.eta)
            .add(&SymMatrix::from_lowrank(&vtop, &DMatrix::from_diagonal(&(lam * cfg.eta))));
        assert!((x1.trace() - 1.0).abs() <= 1e-12);
        let evals = sym_eig_full(&x1).unwrap().values;
        assert!(evals.iter().all(|&l| l >= -1e-12));
        assert_eq!(objective(&inst, &IterateState::init_dense(&inst)), 0.0);
    }

    #[test]
    fn gblockfw_with_small_k_stalls_above_fw() {
        // The planted rank is 3 and the solution genuinely uses it, so
        // a rank-2 block cannot represent the optimum.
        let inst = sensing(20, 3, 0.5, 83);
        let mut gb = SolverConfig::new(Algorithm::Gblockfw);
        gb.k = 2;
        gb.beta = Some(gblockfw_preset_beta(20));
        gb.max_iters = 150;
        gb.gap_tol = Some(1e-13);
        let mut fw = SolverConfig::new(Algorithm::Fw);
        fw.max_iters = 150;
        fw.gap_tol = Some(1e-13);
        let mut sp = SolverConfig::new(Algorithm::Specfw);
        sp.k = 4;
        sp.max_iters = 150;
        sp.gap_tol = Some(1e-13);
        let rgb = run(&inst, &gb).unwrap();
        let rfw = run(&inst, &fw).unwrap();
        let rsp = run(&inst, &sp).unwrap();
        let f_best = rsp.final_objective.min(rfw.final_objective);
        let h_gb = rgb.final_objective - f_best;
        let h_fw = rfw.final_objective - f_best;
        assert!(
            h_gb > 2.0 * h_fw + 1e-12,
            "expected a plateau: block gap {h_gb}, classical gap {h_fw}"
        );
    }

    #[test]
    fn pgd_monotone_and_agrees_with_specfw() {
        let inst = sensing(10, 2, 0.5, 89);
        let beta = exact_beta(&inst);
        let mut pg = SolverConfig::new(Algorithm::Pgd);
        pg.beta = Some(beta);
        pg.max_iters = 400;
        pg.gap_tol = Some(1e-12);
        let rec = run(&inst, &pg).unwrap();
        for w in rec.rows.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-10);
        }
        let mut ap = pg.clone();
        ap.algorithm = Algorithm::Apgd;
        ap.max_iters = 2000;
        let rap = run(&inst, &ap).unwrap();
        let mut sp = SolverConfig::new(Algorithm::Specfw);
        sp.k = 4;
        sp.max_iters = 400;
        sp.gap_tol = Some(1e-12);
        let rsp = run(&inst, &sp).unwrap();
        let scale = rsp.final_objective.abs().max(1.0);
        assert!(
            (rap.final_objective - rsp.final_objective).abs() <= 1e-5 * scale,
            "apgd {} vs specfw {}",
            rap.final_objective,
            rsp.final_objective
        );
    }

    #[test]
    fn fw_gap_matches_dense_eigen_oracle() {
        let inst = sensing(8, 2, 0.5, 97);
        let st = displaced_state(&inst, 101);
        let gap = fw_gap(&inst, &st).unwrap();
        let g = gradient_dense(&inst, &st);
        let full = sym_eig_full(&g).unwrap();
        let lam_min = full.values[full.values.len() - 1];
        let x = st.x_dense().unwrap();
        let oracle = x.dot(&g) - inst.tau() * lam_min;
        assert!(
            (gap - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
            "gap {gap} vs oracle {oracle}"
        );
        assert!(gap >= -1e-8);
        // At the linear toy's optimum the gap vanishes.
        let toy = linear_toy();
        let mut cfg = SolverConfig::new(Algorithm::Fw);
        cfg.max_iters = 50;
        let rec = fw_run(&toy, &cfg).unwrap();
        let xf = rec.final_dense().unwrap().clone();
        let z = toy.map().apply_dense(&xf);
        let c = toy.c_matrix().unwrap().dot(&xf);
        let stf = IterateState {
            repr: Repr::Dense(xf),
            z,
            c,
            iter: 0,
        };
        assert!(fw_gap(&toy, &stf).unwrap().abs() <= 1e-8);
    }

    #[test]
    fn sketched_specfw_reproduces_dense_trajectory() {
        let inst = sensing(16, 2, 0.5, 103);
        let mut dense = SolverConfig::new(Algorithm::Specfw);
        dense.k = 3;
        dense.max_iters = 30;
        dense.gap_tol = Some(1e-14);
        let mut sk = dense.clone();
        sk.use_sketch = true;
        sk.sketch_rank = 6;
        let rd = run(&inst, &dense).unwrap();
        let rs = run(&inst, &sk).unwrap();
        assert_eq!(rd.rows.len(), rs.rows.len());
        for (a, b) in rd.rows.iter().zip(&rs.rows) {
            assert!(
                (a.objective - b.objective).abs() <= 1e-8,
                "iter {}: {} vs {}",
                a.iter,
                a.objective,
                b.objective
            );
            assert!((a.fw_gap - b.fw_gap).abs() <= 1e-8);
        }
        let factors = rs.reconstruct_sketched().unwrap().unwrap();
        assert_eq!(factors.left.nrows(), 16);
        assert!(rd.final_dense().is_some());
        assert!(rs.final_dense().is_none());
    }

    #[test]
    fn identical_configs_reproduce_rows_bitwise() {
        let inst = sensing(8, 2, 0.5, 107);
        let mut cfg = SolverConfig::new(Algorithm::Specfw);
        cfg.k = 2;
        cfg.max_iters = 25;
        cfg.gap_tol = Some(1e-14);
        let a = run(&inst, &cfg).unwrap();
        let b = run(&inst, &cfg).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.iter, rb.iter);
            assert_eq!(ra.objective.to_bits(), rb.objective.to_bits());
            assert_eq!(ra.fw_gap.to_bits(), rb.fw_gap.to_bits());
            assert_eq!(ra.eta_hat.to_bits(), rb.eta_hat.to_bits());
            assert_eq!(ra.update_rank, rb.update_rank);
            assert_eq!(ra.eigengap_est.to_bits(), rb.eigengap_est.to_bits());
        }
    }

    #[test]
    fn stop_reasons_cover_all_three_paths() {
        let inst = sensing(6, 1, 0.5, 109);
        let mut cfg = SolverConfig::new(Algorithm::Fw);
        cfg.time_limit_s = Some(0.0);
        let rec = run(&inst, &cfg).unwrap();
        assert_eq!(rec.stop_reason, StopReason::TimeLimit);
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.rows[0].iter, 0);

        let mut cfg = SolverConfig::new(Algorithm::Fw);
        cfg.max_iters = 5;
        cfg.gap_tol = Some(1e-16);
        let rec = run(&inst, &cfg).unwrap();
        assert_eq!(rec.stop_reason, StopReason::MaxIters);
        assert_eq!(rec.rows.len(), 6);

        let mut cfg = SolverConfig::new(Algorithm::Fw);
        cfg.gap_tol = Some(1e10);
        let rec = run(&inst, &cfg).unwrap();
        assert_eq!(rec.stop_reason, StopReason::GapTolReached);
        assert_eq!(rec.rows.len(), 1);
    }

    #[test]
    fn final_iterate_rescales_to_original_trace() {
        let inst = sensing(8, 2, 0.5, 113);
        let mut cfg = SolverConfig::new(Algorithm::Specfw);
        cfg.k = 3;
        cfg.max_iters = 120;
        let rec = run(&inst, &cfg).unwrap();
        let x = rec.final_dense().unwrap();
        assert!((x.trace() - 0.5).abs() <= 1e-9);
        // The recorded objective is the original problem's objective.
        let z = inst.map().apply_dense(x);
        let direct = inst.outer().value(&z);
        assert!((direct - rec.final_objective).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn update_rank_stays_within_block_size() {
        let inst = sensing(10, 3, 0.5, 127);
        let mut cfg = SolverConfig::new(Algorithm::Specfw);
        cfg.k = 3;
        cfg.max_iters = 40;
        let rec = run(&inst, &cfg).unwrap();
        for row in &rec.rows {
            assert!(row.update_rank <= 3);
        }
        let mut gb = SolverConfig::new(Algorithm::Gblockfw);
        gb.k = 3;
        gb.beta = Some(gblockfw_preset_beta(10));
        gb.max_iters = 40;
        let rgb = run(&inst, &gb).unwrap();
        for row in rgb.rows.iter().take(rgb.rows.len() - 1) {
            assert_eq!(row.eta_hat, gb.eta);
            assert!(row.update_rank <= 3);
        }
    }
}
