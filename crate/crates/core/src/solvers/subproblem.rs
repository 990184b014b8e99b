//! The small-scale block subproblem
//! `min F(eta, S)  s.t.  eta >= 0, S psd, eta + tr(S) = 1`
//! shared by the spectral solver's three back-ends, plus the inner
//! accelerated projected-gradient loop that solves it.
//!
//! Each back-end exposes the reduced objective and its gradient in the
//! variables `(eta, S)` with `S` a small k-by-k symmetric matrix:
//! - `exact`: `F = g(eta z + A_V(S)) + eta c + <V^T C V, S>`, the true
//!   objective of `f(eta X + V S V^T)` written through the caches;
//! - `g_model`: the quadratic upper model of `g` anchored at the
//!   current measurements, exact for quadratic `g`;
//! - `f_model`: the prox-style upper model of `f` anchored at the
//!   current iterate, which needs the dense matrix.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::geometry::project_eta_block;
use crate::linalg::SymMatrix;
use crate::model::{OuterFunction, ReducedMeasurement};

/// Reduced objective over the block set; `grad` returns the pair
/// `(dF/deta, dF/dS)` in the Frobenius geometry that
/// `project_eta_block` projects in.
pub(crate) trait SubObjective {
    fn value(&self, eta: f64, s: &SymMatrix) -> f64;
    fn grad(&self, eta: f64, s: &SymMatrix) -> (f64, SymMatrix);
    /// Upper bound on the gradient Lipschitz constant over the pair
    /// space.
    fn lipschitz(&self) -> f64;
}

/// Safety factor applied to power-iteration curvature estimates.
const CURVATURE_PAD: f64 = 1.05;

/// Power iteration on the Gram operator of the reduced linear map
/// `(eta, S) -> eta z + A_V(S)`; returns an estimate of its largest
/// eigenvalue `sigma_max^2`.
fn reduced_gram_norm<R: Rng>(
    z: &DVector<f64>,
    red: &dyn ReducedMeasurement,
    k: usize,
    rng: &mut R,
) -> f64 {
    let mut a: f64 = rng.sample(StandardNormal);
    let mut s = SymMatrix::symmetrize(nalgebra::DMatrix::from_fn(k, k, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }))
    .expect("random matrix is finite");
    let nrm = (a * a + s.frobenius_norm().powi(2)).sqrt().max(1e-300);
    a /= nrm;
    s = s.scale(1.0 / nrm);
    let mut est = 0.0;
    for _ in 0..40 {
        let w = z * a + red.apply(&s);
        let a2 = w.dot(z);
        let s2 = red.compress_adjoint(&w);
        let nn = (a2 * a2 + s2.frobenius_norm().powi(2)).sqrt();
        if nn <= 1e-300 {
            return 0.0;
        }
        let done = (nn - est).abs() <= 1e-3 * nn;
        est = nn;
        a = a2 / nn;
        s = s2.scale(1.0 / nn);
        if done {
            break;
        }
    }
    est
}

/// True reduced objective (Frank-Wolfe face problem written through
/// the measurement caches).
pub(crate) struct ExactSub<'a> {
    outer: &'a OuterFunction,
    z: &'a DVector<f64>,
    c: f64,
    red: &'a dyn ReducedMeasurement,
    vcv: Option<&'a SymMatrix>,
    l: f64,
}

impl<'a> ExactSub<'a> {
    pub fn new<R: Rng>(
        outer: &'a OuterFunction,
        z: &'a DVector<f64>,
        c: f64,
        red: &'a dyn ReducedMeasurement,
        vcv: Option<&'a SymMatrix>,
        k: usize,
        rng: &mut R,
    ) -> Self {
        let sigma2 = reduced_gram_norm(z, red, k, rng);
        let l = (sigma2 * outer.lipschitz_grad() * CURVATURE_PAD).max(1e-12);
        ExactSub {
            outer,
            z,
            c,
            red,
            vcv,
            l,
        }
    }

    fn measurements(&self, eta: f64, s: &SymMatrix) -> DVector<f64> {
        self.z * eta + self.red.apply(s)
    }

    /// Linear-term value `eta c + <V^T C V, S>`.
    fn linear(&self, eta: f64, s: &SymMatrix) -> f64 {
        eta * self.c + self.vcv.map_or(0.0, |m| m.dot(s))
    }
}

impl SubObjective for ExactSub<'_> {
    fn value(&self, eta: f64, s: &SymMatrix) -> f64 {
        self.outer.value(&self.measurements(eta, s)) + self.linear(eta, s)
    }

    fn grad(&self, eta: f64, s: &SymMatrix) -> (f64, SymMatrix) {
        let w = self.outer.grad(&self.measurements(eta, s));
        let g_eta = w.dot(self.z) + self.c;
        let mut g_s = self.red.compress_adjoint(&w);
        if let Some(m) = self.vcv {
            g_s = g_s.add(m);
        }
        (g_eta, g_s)
    }

    fn lipschitz(&self) -> f64 {
        self.l
    }
}

/// Quadratic upper model of `g` anchored at the current measurement
/// vector: with `d(eta, S) = (eta - 1) z + A_V(S)`,
/// `F = g(z) + <w0, d> + (L_g/2)||d||^2 + eta c + <V^T C V, S>`.
/// Coincides with the exact objective (up to constants) when `g` is
/// quadratic with tight `L_g`.
pub(crate) struct GModelSub<'a> {
    z: &'a DVector<f64>,
    c: f64,
    red: &'a dyn ReducedMeasurement,
    vcv: Option<&'a SymMatrix>,
    w0: DVector<f64>,
    g0: f64,
    lg: f64,
    l: f64,
}

impl<'a> GModelSub<'a> {
    pub fn new<R: Rng>(
        outer: &'a OuterFunction,
        z: &'a DVector<f64>,
        c: f64,
        red: &'a dyn ReducedMeasurement,
        vcv: Option<&'a SymMatrix>,
        k: usize,
        rng: &mut R,
    ) -> Self {
        let sigma2 = reduced_gram_norm(z, red, k, rng);
        let lg = outer.lipschitz_grad();
        GModelSub {
            z,
            c,
            red,
            vcv,
            w0: outer.grad(z),
            g0: outer.value(z),
            lg,
            l: (sigma2 * lg * CURVATURE_PAD).max(1e-12),
        }
    }

    fn shift(&self, eta: f64, s: &SymMatrix) -> DVector<f64> {
        self.z * (eta - 1.0) + self.red.apply(s)
    }
}

impl SubObjective for GModelSub<'_> {
    fn value(&self, eta: f64, s: &SymMatrix) -> f64 {
        let d = self.shift(eta, s);
        self.g0 + self.w0.dot(&d) + 0.5 * self.lg * d.norm_squared()
            + eta * self.c
            + self.vcv.map_or(0.0, |m| m.dot(s))
    }

    fn grad(&self, eta: f64, s: &SymMatrix) -> (f64, SymMatrix) {
        let q = &self.w0 + self.shift(eta, s) * self.lg;
        let g_eta = q.dot(self.z) + self.c;
        let mut g_s = self.red.compress_adjoint(&q);
        if let Some(m) = self.vcv {
            g_s = g_s.add(m);
        }
        (g_eta, g_s)
    }

    fn lipschitz(&self) -> f64 {
        self.l
    }
}

/// Prox-style upper model of `f` anchored at the dense iterate: with
/// `D(eta, S) = (eta - 1) X + V S V^T`,
/// `F = f(X) + <D, grad f(X)> + (L_f/2)||D||_F^2`.
pub(crate) struct FModelSub {
    /// `f(X_t)`.
    f0: f64,
    /// `<X_t, grad f(X_t)>`.
    xg: f64,
    /// `V^T grad f(X_t) V`.
    gk: SymMatrix,
    /// `V^T X_t V`.
    p: SymMatrix,
    /// `||X_t||_F^2`.
    x2: f64,
    lf: f64,
    l: f64,
}

impl FModelSub {
    pub fn new<R: Rng>(
        f0: f64,
        xg: f64,
        gk: SymMatrix,
        p: SymMatrix,
        x2: f64,
        lf: f64,
        rng: &mut R,
    ) -> Self {
        // Curvature = lf * lambda_max of the Gram pair-operator
        // (a, S) -> (a x2 + <P, S>, a P + S), estimated by power
        // iteration on the small pair space.
        let k = p.n();
        let mut a: f64 = rng.sample(StandardNormal);
        let mut s = SymMatrix::symmetrize(nalgebra::DMatrix::from_fn(k, k, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }))
        .expect("random matrix is finite");
        let mut est = 0.0;
        for _ in 0..40 {
            let a2 = a * x2 + p.dot(&s);
            let s2 = p.scale(a).add(&s);
            let nn = (a2 * a2 + s2.frobenius_norm().powi(2)).sqrt();
            if nn <= 1e-300 {
                est = 0.0;
                break;
            }
            let done = (nn - est).abs() <= 1e-3 * nn;
            est = nn;
            a = a2 / nn;
            s = s2.scale(1.0 / nn);
            if done {
                break;
            }
        }
        FModelSub {
            f0,
            xg,
            gk,
            p,
            x2,
            lf,
            l: (lf * est * CURVATURE_PAD).max(1e-12),
        }
    }
}

impl SubObjective for FModelSub {
    fn value(&self, eta: f64, s: &SymMatrix) -> f64 {
        let e = eta - 1.0;
        let quad = e * e * self.x2 + 2.0 * e * self.p.dot(s) + s.frobenius_norm().powi(2);
        self.f0 + e * self.xg + self.gk.dot(s) + 0.5 * self.lf * quad
    }

    fn grad(&self, eta: f64, s: &SymMatrix) -> (f64, SymMatrix) {
        let e = eta - 1.0;
        let g_eta = self.xg + self.lf * (e * self.x2 + self.p.dot(s));
        let g_s = self.gk.add(&self.p.scale(self.lf * e)).add(&s.scale(self.lf));
        (g_eta, g_s)
    }

    fn lipschitz(&self) -> f64 {
        self.l
    }
}

/// Outcome of the inner solve; `value` is the objective at the
/// returned point, which is never worse than the anchor `(1, 0)`.
#[derive(Debug, Clone)]
pub(crate) struct SubResult {
    pub eta: f64,
    pub s: SymMatrix,
    #[cfg_attr(not(test), allow(dead_code))]
    pub value: f64,
    pub converged: bool,
    pub iters: usize,
}

fn pair_dist(a1: f64, s1: &SymMatrix, a2: f64, s2: &SymMatrix) -> f64 {
    let da = a1 - a2;
    (da * da + s1.sub(s2).frobenius_norm().powi(2)).sqrt()
}

/// Smallest and largest step curvature the adaptive loop may reach,
/// as multiples of the initial estimate.
const STEP_CURV_FLOOR: f64 = 1e-20;
const STEP_CURV_CEIL: f64 = 1e30;

/// Accelerated projected gradient over the block set, started from
/// `warm` when given (projected onto the block set) and from the
/// anchor `(1, 0)` otherwise. The step curvature backtracks until the
/// quadratic majorization holds and relaxes toward the curvature
/// observed along each accepted step, so the loop stays fast even when
/// the reduced map is nearly singular along the active face. Momentum
/// restarts whenever a step backtracks or the objective rises. Stops
/// when the projected-gradient mapping at the fixed reference
/// curvature drops to `sub_tol`. The returned point is always feasible
/// and never worse than the anchor, whatever the start.
pub(crate) fn solve_block_apgd(
    obj: &dyn SubObjective,
    k: usize,
    sub_tol: f64,
    max_iters: usize,
    warm: Option<(f64, SymMatrix)>,
) -> Result<SubResult> {
    let l_ref = obj.lipschitz().max(1e-12);
    let mut l = l_ref;
    let anchor_s = SymMatrix::zeros(k);
    let anchor_val = obj.value(1.0, &anchor_s);
    let (mut u_eta, mut u_s) = match warm {
        Some((e, s)) => project_eta_block(e, &s, 1.0)?,
        None => (1.0, anchor_s.clone()),
    };
    let mut f_u = obj.value(u_eta, &u_s);
    let mut best = if anchor_val < f_u {
        (1.0, anchor_s, anchor_val)
    } else {
        (u_eta, u_s.clone(), f_u)
    };
    let mut p_eta = u_eta;
    let mut p_s = u_s.clone();
    let mut t_mom = 1.0f64;
    let mut converged = false;
    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt());
        let om = (t_mom - 1.0) / t_next;
        let y_eta = u_eta + om * (u_eta - p_eta);
        let y_s = u_s.add(&u_s.sub(&p_s).scale(om));
        let (g_eta, g_s) = obj.grad(y_eta, &y_s);
        let f_y = obj.value(y_eta, &y_s);
        // Stationarity is measured at the reference curvature so the
        // tolerance keeps a fixed meaning while `l` adapts. The
        // extrapolated point may sit outside the block set, so only
        // the projected point is ever recorded.
        let (r_eta, r_s) = project_eta_block(
            y_eta - g_eta / l_ref,
            &y_s.sub(&g_s.scale(1.0 / l_ref)),
            1.0,
        )?;
        if l_ref * pair_dist(y_eta, &y_s, r_eta, &r_s) <= sub_tol {
            let f_r = obj.value(r_eta, &r_s);
            if f_r < best.2 {
                best = (r_eta, r_s, f_r);
            }
            converged = true;
            break;
        }
        let (c_eta, c_s) =
            project_eta_block(y_eta - g_eta / l, &y_s.sub(&g_s.scale(1.0 / l)), 1.0)?;
        let d_eta = c_eta - y_eta;
        let d_s = c_s.sub(&y_s);
        let dd = d_eta * d_eta + d_s.frobenius_norm().powi(2);
        let lin = g_eta * d_eta + g_s.dot(&d_s);
        let f_c = obj.value(c_eta, &c_s);
        let slack = 1e-12 * f_y.abs().max(1.0);
        if f_c <= f_y + lin + 0.5 * l * dd + slack {
            // Let the observed curvature along the step drive the next
            // trial, padded so a straight quadratic passes first try.
            let q = 2.0 * (f_c - f_y - lin) / dd.max(f64::MIN_POSITIVE);
            l = (1.2 * q).max(0.05 * l).max(l_ref * STEP_CURV_FLOOR);
            let restart = f_c > f_u + slack;
            p_eta = u_eta;
            p_s = std::mem::replace(&mut u_s, c_s);
            u_eta = c_eta;
            f_u = f_c;
            t_mom = if restart { 1.0 } else { t_next };
            if f_u < best.2 {
                best = (u_eta, u_s.clone(), f_u);
            }
        } else {
            l = (2.0 * l).min(l_ref * STEP_CURV_CEIL);
            t_mom = 1.0;
        }
    }
    Ok(SubResult {
        eta: best.0,
        s: best.1,
        value: best.2,
        converged,
        iters,
    })
}
