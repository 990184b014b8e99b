//! Concrete measurement maps and the quadratic-sensing generator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::{
    GroundTruth, MeasurementMap, OuterFunction, ProblemInstance, ReducedMeasurement,
};
use crate::threads::{self, ROW_CHUNK};

/// Below this measurement count the chunked code paths run serially;
/// the chunk layout (and thus the floating-point result) is the same
/// either way.
const PAR_THRESHOLD: usize = 2 * ROW_CHUNK;

/// Quadratic sensing map `A(X)_i = a_i^T X a_i`.
///
/// The measurement vectors are stored as the columns of an n-by-m
/// matrix so each measurement is contiguous in memory.
pub struct SensingMap {
    a_t: DMatrix<f64>,
}

impl SensingMap {
    /// `a_t` holds one measurement vector per column.
    pub fn from_vectors(a_t: DMatrix<f64>) -> Result<Self> {
        if a_t.nrows() == 0 {
            return Err(Error::input("measurement vectors must have positive dimension"));
        }
        if a_t.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("measurement vectors have non-finite entries"));
        }
        threads::init();
        Ok(SensingMap { a_t })
    }

    /// n-by-m matrix of measurement vectors (one per column).
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.a_t
    }

    fn chunks(&self) -> Vec<(usize, usize)> {
        let m = self.m();
        let mut out = Vec::with_capacity(m / ROW_CHUNK + 1);
        let mut start = 0;
        while start < m {
            let len = ROW_CHUNK.min(m - start);
            out.push((start, len));
            start += len;
        }
        out
    }
}

impl MeasurementMap for SensingMap {
    fn n(&self) -> usize {
        self.a_t.nrows()
    }

    fn m(&self) -> usize {
        self.a_t.ncols()
    }

    fn apply_dense(&self, x: &SymMatrix) -> DVector<f64> {
        let m = self.m();
        let mut z = DVector::zeros(m);
        if m == 0 {
            return z;
        }
        // W = X A_t, then z_i = <a_i, w_i> columnwise.
        let w = x.as_matrix() * &self.a_t;
        let col_dot = |i: usize| self.a_t.column(i).dot(&w.column(i));
        if m >= PAR_THRESHOLD {
            let vals: Vec<f64> = (0..m).into_par_iter().map(col_dot).collect();
            for (i, v) in vals.into_iter().enumerate() {
                z[i] = v;
            }
        } else {
            for i in 0..m {
                z[i] = col_dot(i);
            }
        }
        z
    }

    fn apply_lowrank(&self, v: &DMatrix<f64>, s: &DMatrix<f64>) -> DVector<f64> {
        let m = self.m();
        let mut z = DVector::zeros(m);
        if m == 0 {
            return z;
        }
        // G = A_t^T V (m x k), H = G S; z_i = <g_i, h_i> rowwise.
        let g = self.a_t.tr_mul(v);
        let h = &g * s;
        let row_dot = |i: usize| g.row(i).tr_dot(&h.row(i).transpose());
        if m >= PAR_THRESHOLD {
            let vals: Vec<f64> = (0..m).into_par_iter().map(row_dot).collect();
            for (i, val) in vals.into_iter().enumerate() {
                z[i] = val;
            }
        } else {
            for i in 0..m {
                z[i] = row_dot(i);
            }
        }
        z
    }

    fn adjoint_matvec(&self, w: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let m = self.m();
        let n = self.n();
        if m == 0 {
            return DVector::zeros(n);
        }
        // (sum_i w_i a_i a_i^T) x = A_t (w .* (A_t^T x)), chunked over
        // measurements with partials combined in chunk order so the
        // result does not depend on the thread count.
        let chunks = self.chunks();
        let partial = |&(start, len): &(usize, usize)| -> DVector<f64> {
            let block = self.a_t.columns(start, len);
            let mut t = block.tr_mul(x);
            for (j, ti) in t.iter_mut().enumerate() {
                *ti *= w[start + j];
            }
            &block * t
        };
        let partials: Vec<DVector<f64>> = if m >= PAR_THRESHOLD {
            chunks.par_iter().map(partial).collect()
        } else {
            chunks.iter().map(partial).collect()
        };
        let mut out = DVector::zeros(n);
        for p in partials {
            out += p;
        }
        out
    }

    fn adjoint_dense(&self, w: &DVector<f64>) -> SymMatrix {
        let n = self.n();
        if self.m() == 0 {
            return SymMatrix::zeros(n);
        }
        // A_t diag(w) A_t^T as one product: scale columns, multiply.
        let mut scaled = self.a_t.clone();
        for (i, mut col) in scaled.column_iter_mut().enumerate() {
            col *= w[i];
        }
        let prod = &scaled * self.a_t.transpose();
        SymMatrix::symmetrize(prod).expect("product of finite matrices")
    }

    fn as_sensing(&self) -> Option<&SensingMap> {
        Some(self)
    }

    fn reduce<'a>(&'a self, v: &DMatrix<f64>) -> Box<dyn ReducedMeasurement + 'a> {
        // One m x k product up front turns both reduced operations into
        // O(m k^2) work: with G = A_t^T V,
        //   A(V S V^T)_i      = <g_i, (G S)_i>   (rows of G),
        //   sym(V^T (A* w) V) = G^T diag(w) G.
        Box::new(SensingReduced {
            g: self.a_t.tr_mul(v),
        })
    }
}

struct SensingReduced {
    g: DMatrix<f64>,
}

impl ReducedMeasurement for SensingReduced {
    fn apply(&self, s: &SymMatrix) -> DVector<f64> {
        let h = &self.g * s.as_matrix();
        DVector::from_fn(self.g.nrows(), |i, _| {
            self.g.row(i).tr_dot(&h.row(i).transpose())
        })
    }

    fn compress_adjoint(&self, w: &DVector<f64>) -> SymMatrix {
        let mut gw = self.g.clone();
        for (i, mut row) in gw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let small = gw.tr_mul(&self.g);
        SymMatrix::symmetrize(small).expect("compression of finite inputs")
    }
}

/// Diagonal-extraction map `A(X) = diag(X)`; `sigma_max = 1` exactly.
pub struct DiagMap {
    n: usize,
}

impl DiagMap {
    pub fn new(n: usize) -> Self {
        DiagMap { n }
    }
}

impl MeasurementMap for DiagMap {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.n
    }

    fn apply_dense(&self, x: &SymMatrix) -> DVector<f64> {
        x.as_matrix().diagonal()
    }

    fn apply_lowrank(&self, v: &DMatrix<f64>, s: &DMatrix<f64>) -> DVector<f64> {
        let vs = v * s;
        DVector::from_fn(self.n, |i, _| vs.row(i).tr_dot(&v.row(i).transpose()))
    }

    fn adjoint_matvec(&self, w: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        w.component_mul(x)
    }

    fn adjoint_dense(&self, w: &DVector<f64>) -> SymMatrix {
        SymMatrix::from_diagonal(w)
    }

    fn op_norm_exact(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Random rank-`r_nat` quadratic-sensing instance:
/// `y_i = ||U^T a_i||^2 + noise` with `m = 15 n r_nat` standard normal
/// measurement vectors, `g(z) = 1/2 ||z - y||^2`, no linear term, and
/// the ground truth attached.
///
/// The planted factor `U` has standard normal entries rescaled to
/// `||U||_F = 1`; the noise is `c ||y0|| v` for a uniformly random unit
/// vector `v`. All draws come from one seeded stream in a fixed order,
/// so equal arguments reproduce the instance bit for bit.
pub fn generate_quadratic_sensing(
    n: usize,
    r_nat: usize,
    noise_c: f64,
    tau: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    if r_nat == 0 || r_nat > n {
        return Err(Error::input(format!(
            "planted rank must satisfy 1 <= r <= n, got r={r_nat}, n={n}"
        )));
    }
    if !(noise_c >= 0.0) {
        return Err(Error::input("noise ratio must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = DMatrix::zeros(n, r_nat);
    for j in 0..r_nat {
        for i in 0..n {
            u[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let norm = u.norm();
    u.unscale_mut(norm);

    let m = 15 * n * r_nat;
    let mut a_t = DMatrix::zeros(n, m);
    for i in 0..m {
        for j in 0..n {
            // measurement i is column i; draw order is "row-major" in
            // the (measurement, coordinate) sense, matching the on-disk
            // layout.
            a_t[(j, i)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let map = SensingMap::from_vectors(a_t)?;

    // y0_i = ||U^T a_i||^2 = A(U U^T)_i.
    let y0 = map.apply_lowrank(&u, &DMatrix::identity(r_nat, r_nat));
    let mut v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let vn = v.norm();
    v.unscale_mut(vn.max(1e-300));
    let y = &y0 + v * (noise_c * y0.norm());

    ProblemInstance::new(
        OuterFunction::half_squared_distance(y),
        std::sync::Arc::new(map),
        None,
        tau,
        Some(GroundTruth {
            u_nat: u,
            noise_c,
            seed,
        }),
    )
}
