//! Embedded rigid-body attitude dynamics on R^12 with an interconnected-cell
//! safe region.
//!
//! The state stacks the rotation matrix row-major followed by the body rates:
//! `x = (r11, r12, r13, r21, ..., r33, w1, w2, w3)`. The kinematics are
//! `R_dot = R [w]x`, the Euler dynamics `J w_dot = -w x (J w) + u`.
//!
//! The safe region is a union of cells around sample orientations `R_i`:
//! each cell contributes `s(r_i(R)/eps)` with `r_i(R) = eps - |R - R_i|_F^2 / 2`
//! and a smooth transition `s` that is exactly 0 outside the cell and exactly
//! 1 at its center, so the barrier `b = sum_i s(r_i/eps) - delta` is smooth,
//! depends on `R` only (least relative degree 2), and grades from `1 - delta`
//! at a center to `-delta` far away.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, RowDVector, Vector3};

use crate::chain::{ConstraintProvider, JetLieProvider, LieTerms};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::systems::SystemModel;

/// Physical and barrier parameters of the attitude scenario. Constructed
/// through [`AttitudeParams::new`], which validates the inertia matrix and
/// the cell centers; fields are read through accessors so the cached inertia
/// inverse can never go stale.
#[derive(Debug, Clone)]
pub struct AttitudeParams {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    cell_centers: Vec<Matrix3<f64>>,
    epsilon: f64,
    delta: f64,
    k1: f64,
    k2: f64,
    xi: f64,
}

impl AttitudeParams {
    pub fn new(
        inertia: Matrix3<f64>,
        cell_centers: Vec<Matrix3<f64>>,
        epsilon: f64,
        delta: f64,
        k1: f64,
        k2: f64,
        xi: f64,
    ) -> Result<Self> {
        if (inertia - inertia.transpose()).amax() > 1e-12 {
            return Err(Error::invalid("inertia matrix must be symmetric"));
        }
        if inertia.cholesky().is_none() {
            return Err(Error::invalid("inertia matrix must be positive definite"));
        }
        if cell_centers.is_empty() {
            return Err(Error::invalid("at least one cell center is required"));
        }
        for (i, r) in cell_centers.iter().enumerate() {
            let orth = (r.transpose() * r - Matrix3::identity()).norm();
            if orth >= 1e-10 {
                return Err(Error::invalid(format!(
                    "cell center {i} is not orthonormal (|R^T R - I|_F = {orth:.3e})"
                )));
            }
            if (r.determinant() - 1.0).abs() >= 1e-8 {
                return Err(Error::invalid(format!(
                    "cell center {i} must have determinant 1"
                )));
            }
        }
        for (name, v) in [
            ("epsilon", epsilon),
            ("delta", delta),
            ("k1", k1),
            ("k2", k2),
            ("xi", xi),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| Error::invalid("inertia matrix is not invertible"))?;
        Ok(AttitudeParams {
            inertia,
            inertia_inv,
            cell_centers,
            epsilon,
            delta,
            k1,
            k2,
            xi,
        })
    }

    /// The case-study inertia matrix in kg m^2.
    pub fn standard_inertia() -> Matrix3<f64> {
        Matrix3::new(
            5.5, 0.06, -0.03, //
            0.06, 5.5, 0.01, //
            -0.03, 0.01, 0.1,
        )
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn inertia_inverse(&self) -> &Matrix3<f64> {
        &self.inertia_inv
    }

    pub fn cell_centers(&self) -> &[Matrix3<f64>] {
        &self.cell_centers
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }
}

/// Packs (R, w) into the 12-dimensional embedded state, row-major R first.
pub fn pack_state(r: &Matrix3<f64>, omega: &Vector3<f64>) -> DVector<f64> {
    let mut x = DVector::zeros(12);
    for row in 0..3 {
        for col in 0..3 {
            x[3 * row + col] = r[(row, col)];
        }
    }
    for k in 0..3 {
        x[9 + k] = omega[k];
    }
    x
}

/// Inverse of [`pack_state`].
pub fn unpack_state(x: &DVector<f64>) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    check_state(x)?;
    let r = Matrix3::new(
        x[0], x[1], x[2], //
        x[3], x[4], x[5], //
        x[6], x[7], x[8],
    );
    Ok((r, Vector3::new(x[9], x[10], x[11])))
}

fn check_state(x: &DVector<f64>) -> Result<()> {
    if x.len() != 12 {
        return Err(Error::DimensionMismatch {
            expected: 12,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("attitude state"));
    }
    Ok(())
}

/// Drift of the embedded attitude system: the nine bilinear rotation
/// kinematics components (R_dot = R [w]x written out) and the Euler term
/// J^{-1}(-w x J w).
pub fn attitude_drift(x: &DVector<f64>, params: &AttitudeParams) -> Result<DVector<f64>> {
    check_state(x)?;
    let (w1, w2, w3) = (x[9], x[10], x[11]);
    let mut dx = DVector::zeros(12);
    for j in 0..3 {
        let (r1, r2, r3) = (x[3 * j], x[3 * j + 1], x[3 * j + 2]);
        dx[3 * j] = r2 * w3 - r3 * w2;
        dx[3 * j + 1] = r3 * w1 - r1 * w3;
        dx[3 * j + 2] = r1 * w2 - r2 * w1;
    }
    let w = Vector3::new(w1, w2, w3);
    let w_dot = params.inertia_inv * (-w.cross(&(params.inertia * w)));
    for k in 0..3 {
        dx[9 + k] = w_dot[k];
    }
    Ok(dx)
}

fn attitude_drift_jets(x: &[Jet2], inertia: &Matrix3<f64>, inertia_inv: &Matrix3<f64>) -> Vec<Jet2> {
    let w = [x[9], x[10], x[11]];
    let mut dx = Vec::with_capacity(12);
    for j in 0..3 {
        let (r1, r2, r3) = (x[3 * j], x[3 * j + 1], x[3 * j + 2]);
        dx.push(r2 * w[2] - r3 * w[1]);
        dx.push(r3 * w[0] - r1 * w[2]);
        dx.push(r1 * w[1] - r2 * w[0]);
    }
    let jw: Vec<Jet2> = (0..3)
        .map(|i| {
            w[0] * inertia[(i, 0)] + w[1] * inertia[(i, 1)] + w[2] * inertia[(i, 2)]
        })
        .collect();
    let torque = [
        -(w[1] * jw[2] - w[2] * jw[1]),
        -(w[2] * jw[0] - w[0] * jw[2]),
        -(w[0] * jw[1] - w[1] * jw[0]),
    ];
    for i in 0..3 {
        dx.push(
            torque[0] * inertia_inv[(i, 0)]
                + torque[1] * inertia_inv[(i, 1)]
                + torque[2] * inertia_inv[(i, 2)],
        );
    }
    dx
}

/// Smooth transition: exactly 0 below 0, exactly 1 above 1, and
/// `rho(v) / (rho(v) + rho(1-v))` with `rho(v) = (1/v) e^{-1/v}` in between.
/// Returns (value, first derivative, second derivative).
pub fn smooth_transition(v: f64) -> (f64, f64, f64) {
    let jet = smooth_transition_jet(Jet2::variable(v));
    (jet.value, jet.d1, jet.d2)
}

/// [`smooth_transition`] on order-2 jets, used inside the barrier.
pub fn smooth_transition_jet(v: Jet2) -> Jet2 {
    // Below the guard, rho underflows to exactly zero anyway; the early
    // return keeps 1/v from overflowing into inf * 0 = NaN inside the jet
    // products. The seams are exact: all derivatives of rho vanish at 0+.
    if v.value < 1e-30 {
        return Jet2::constant(0.0);
    }
    if v.value >= 1.0 {
        return Jet2::constant(1.0);
    }
    let rho_v = rho_jet(v);
    let rho_mirror = rho_jet(Jet2::constant(1.0) - v);
    // Close to saturation, 1 - s drops below the representable spacing at
    // 1.0 and the quotient's last bits are roundoff noise; pin the jet to
    // its exact limit so the transition stays monotone in floating point.
    if rho_mirror.value <= rho_v.value * 1e-13 {
        return Jet2::constant(1.0);
    }
    rho_v / (rho_v + rho_mirror)
}

fn rho_jet(v: Jet2) -> Jet2 {
    let inv = v.recip();
    inv * (-inv).exp()
}

/// Barrier over the cell region: `sum_i s(r_i(R)/eps) - delta` with
/// `r_i(R) = eps - |R - R_i|_F^2 / 2`. Depends on the attitude only.
pub fn cell_barrier(r: &Matrix3<f64>, params: &AttitudeParams) -> Result<f64> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("cell_barrier attitude"));
    }
    let mut total = -params.delta;
    for center in &params.cell_centers {
        let margin = params.epsilon - (r - center).norm_squared() / 2.0;
        total += smooth_transition(margin / params.epsilon).0;
    }
    Ok(total)
}

fn cell_barrier_jets(r: &[Jet2], cells: &[Matrix3<f64>], epsilon: f64, delta: f64) -> Jet2 {
    let mut total = Jet2::constant(-delta);
    for center in cells {
        let mut dist_sq = Jet2::constant(0.0);
        for row in 0..3 {
            for col in 0..3 {
                let diff = r[3 * row + col] - center[(row, col)];
                dist_sq = dist_sq + diff * diff;
            }
        }
        let margin = Jet2::constant(epsilon) - dist_sq * 0.5;
        total = total + smooth_transition_jet(margin * (1.0 / epsilon));
    }
    total
}

/// Saturated stabilizing law `u = -k1 (R - R^T)^v - k2 tanh(w)`, bounded by
/// `|u|_inf <= 2 k1 + k2`.
pub fn nominal_attitude_controller(
    r: &Matrix3<f64>,
    omega: &Vector3<f64>,
    params: &AttitudeParams,
) -> Vector3<f64> {
    let skew_vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    -params.k1 * skew_vee - params.k2 * omega.map(f64::tanh)
}

/// Additive excitation used by the case study: active on t in [20, 25] with
/// amplitude 0.3, zero outside.
pub fn additive_signal(t: f64) -> Vector3<f64> {
    if !(20.0..=25.0).contains(&t) {
        return Vector3::zeros();
    }
    let s = t - 20.0;
    Vector3::new(
        0.3 * (2.0 * std::f64::consts::PI * s / 5.0).sin(),
        0.3 * (std::f64::consts::PI * s / 5.0).sin(),
        -0.3 * (std::f64::consts::PI * s / 5.0).sin(),
    )
}

/// The plant as a [`SystemModel`].
#[derive(Debug, Clone)]
pub struct AttitudeModel {
    params: AttitudeParams,
}

impl AttitudeModel {
    pub fn new(params: AttitudeParams) -> Self {
        AttitudeModel { params }
    }

    pub fn params(&self) -> &AttitudeParams {
        &self.params
    }
}

impl SystemModel for AttitudeModel {
    fn state_dim(&self) -> usize {
        12
    }

    fn input_dim(&self) -> usize {
        3
    }

    fn drift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        attitude_drift(x, &self.params)
    }

    fn actuation(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_state(x)?;
        let mut g = DMatrix::zeros(12, 3);
        for row in 0..3 {
            for col in 0..3 {
                g[(9 + row, col)] = self.params.inertia_inv[(row, col)];
            }
        }
        Ok(g)
    }

    fn label(&self) -> &str {
        "rigid-body-attitude"
    }
}

/// Forward-differentiation constraint provider for the cell barrier: Lie
/// terms are obtained by evaluating the flow and the barrier on order-2 jets.
pub fn attitude_constraint_provider(params: &AttitudeParams) -> Result<JetLieProvider> {
    let inertia = params.inertia;
    let inertia_inv = params.inertia_inv;
    let flow = Arc::new(move |x: &[Jet2], u: &DVector<f64>| {
        let mut dx = attitude_drift_jets(x, &inertia, &inertia_inv);
        let torque = inertia_inv * Vector3::new(u[0], u[1], u[2]);
        for k in 0..3 {
            dx[9 + k] = dx[9 + k] + torque[k];
        }
        dx
    });
    let cells = params.cell_centers.clone();
    let (epsilon, delta) = (params.epsilon, params.delta);
    let barrier = Arc::new(move |x: &[Jet2]| cell_barrier_jets(&x[0..9], &cells, epsilon, delta));
    JetLieProvider::new(12, 3, 2, flow, barrier)
}

/// Closed-form Lie terms for the same barrier, derived by hand; kept as an
/// independent cross-check of the jet provider.
///
/// With `P_i = R_i^T R` and `a_i = (P_23 - P_32, P_31 - P_13, P_12 - P_21)`
/// (so that `tr(P_i [c]x) = a_i . c`), the margin rate along the kinematics
/// is `r_i_dot = a_i . w`, and
///
/// ```text
/// L_f b      = sum_i (s'_i / eps) (a_i . w)
/// L_g L_f b  = [sum_i (s'_i / eps) a_i]^T J^{-1}
/// L_f^2 b    = sum_i [ s''_i (a_i . w)^2 / eps^2
///                      + (s'_i / eps) (w^T P_i w - |w|^2 tr P_i + a_i . w_dot_f) ]
/// ```
///
/// where `w_dot_f = J^{-1}(-w x J w)` and the quadratic term is
/// `tr(P_i [w]x^2)` expanded via `[w]x^2 = w w^T - |w|^2 I`.
#[derive(Debug, Clone)]
pub struct AttitudeAnalyticProvider {
    params: AttitudeParams,
}

impl ConstraintProvider for AttitudeAnalyticProvider {
    fn relative_order(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        3
    }

    fn eval_b(&self, x: &DVector<f64>) -> Result<f64> {
        let (r, _) = unpack_state(x)?;
        cell_barrier(&r, &self.params)
    }

    fn lie_terms(&self, x: &DVector<f64>) -> Result<LieTerms> {
        let (r, w) = unpack_state(x)?;
        let params = &self.params;
        let w_dot_f = params.inertia_inv * (-w.cross(&(params.inertia * w)));
        let eps = params.epsilon;

        let mut lf_b = 0.0;
        let mut lf2_b = 0.0;
        let mut a_sum = Vector3::zeros();
        for center in &params.cell_centers {
            let p = center.transpose() * r;
            let margin = eps - (r - center).norm_squared() / 2.0;
            let (_, s1, s2) = smooth_transition(margin / eps);
            if s1 == 0.0 && s2 == 0.0 {
                continue;
            }
            let a_i = Vector3::new(
                p[(1, 2)] - p[(2, 1)],
                p[(2, 0)] - p[(0, 2)],
                p[(0, 1)] - p[(1, 0)],
            );
            let phi = a_i.dot(&w);
            lf_b += s1 * phi / eps;
            a_sum += (s1 / eps) * a_i;
            let quadratic = w.dot(&(p * w)) - w.norm_squared() * p.trace();
            lf2_b += s2 * phi * phi / (eps * eps) + (s1 / eps) * (quadratic + a_i.dot(&w_dot_f));
        }
        let row = a_sum.transpose() * params.inertia_inv;
        Ok(LieTerms::SecondOrder {
            lf_b,
            lf2_b,
            lg_lf_b: RowDVector::from_vec(vec![row[0], row[1], row[2]]),
        })
    }
}

/// The hand-derived provider; see [`AttitudeAnalyticProvider`].
pub fn attitude_analytic_provider(params: &AttitudeParams) -> AttitudeAnalyticProvider {
    AttitudeAnalyticProvider {
        params: params.clone(),
    }
}
