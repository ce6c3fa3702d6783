//! Minimally-invasive safety filtering: given a nominal input and one affine
//! constraint `a u + c >= 0` over an unconstrained input space, the nearest
//! admissible input has a closed form (project onto the half-space), so no
//! QP solver is involved. A brute-force projection oracle exists only in
//! tests.

use nalgebra::{DVector, RowDVector};

use crate::error::{Error, Result};

/// When |a|^2 falls below this, the row is treated as exactly zero rather
/// than amplifying rounding noise into an enormous multiplier.
const ZERO_ROW_NORM2: f64 = 1e-24;

/// Output of the closed-form filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    /// The filtered input.
    pub u: DVector<f64>,
    /// KKT multiplier of the constraint; zero iff the constraint is inactive.
    pub mu: f64,
    /// Whether the nominal input violated the constraint.
    pub constraint_active: bool,
    /// a.u + c evaluated at the returned input.
    pub constraint_value: f64,
}

/// Projects `u_nom` onto `{u : a u + c >= 0}`:
///
/// * if `a u_nom + c >= 0` the nominal input is returned bit-exactly with
///   mu = 0;
/// * otherwise `mu = (-a u_nom - c) / |a|^2` and `u = u_nom + mu a^T`, the
///   unique minimizer of `|u - u_nom|^2` subject to the constraint.
///
/// A zero row with `c < 0` is a hard error: for truncated chains built with
/// the singular set inside the deep interior this cannot occur, so reaching
/// it signals the containment assumption was violated.
pub fn filter_control(u_nom: &DVector<f64>, a: &RowDVector<f64>, c: f64) -> Result<FilterResult> {
    if a.len() != u_nom.len() {
        return Err(Error::DimensionMismatch {
            expected: u_nom.len(),
            got: a.len(),
        });
    }
    if !c.is_finite() || u_nom.iter().any(|v| !v.is_finite()) || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("filter inputs"));
    }

    let norm2 = a.norm_squared();
    if norm2 < ZERO_ROW_NORM2 {
        if c >= 0.0 {
            return Ok(FilterResult {
                u: u_nom.clone(),
                mu: 0.0,
                constraint_active: false,
                constraint_value: c,
            });
        }
        return Err(Error::InfeasibleAtState { offset: c });
    }

    let slack = (a * u_nom)[0] + c;
    if slack >= 0.0 {
        return Ok(FilterResult {
            u: u_nom.clone(),
            mu: 0.0,
            constraint_active: false,
            constraint_value: slack,
        });
    }

    let mu = -slack / norm2;
    let u = u_nom + a.transpose() * mu;
    let constraint_value = (a * &u)[0] + c;
    Ok(FilterResult {
        u,
        mu,
        constraint_active: true,
        constraint_value,
    })
}

/// Self-check of a filter output against the KKT conditions of the projection
/// problem: stationarity `u - u_nom = mu a^T`, primal feasibility
/// `a u + c >= 0`, dual feasibility `mu >= 0`, and complementary slackness
/// `mu (a u + c) = 0`, all within 1e-9 (scaled by the magnitudes involved).
pub fn verify_kkt(result: &FilterResult, u_nom: &DVector<f64>, a: &RowDVector<f64>, c: f64) -> bool {
    if result.u.len() != u_nom.len() || a.len() != u_nom.len() {
        return false;
    }
    let tol = 1e-9;
    let scale = 1.0 + result.u.norm().max(u_nom.norm());

    let stationarity = (&result.u - u_nom - a.transpose() * result.mu).norm();
    if stationarity > tol * scale {
        return false;
    }
    let primal = (a * &result.u)[0] + c;
    if primal < -tol * (1.0 + c.abs()) {
        return false;
    }
    if result.mu < 0.0 {
        return false;
    }
    result.mu * primal <= tol * (1.0 + result.mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_row_passes_nominal_through() {
        let u_nom = DVector::from_vec(vec![0.7, -1.3]);
        let a = RowDVector::zeros(2);
        let result = filter_control(&u_nom, &a, 0.95).unwrap();
        assert_eq!(result.u, u_nom);
        assert_eq!(result.mu, 0.0);
        assert!(!result.constraint_active);
        assert!(verify_kkt(&result, &u_nom, &a, 0.95));
    }

    #[test]
    fn one_dimensional_projection() {
        // Half-space u1 >= 2; nearest point to the origin is (2, 0).
        let u_nom = DVector::from_vec(vec![0.0, 0.0]);
        let a = RowDVector::from_row_slice(&[1.0, 0.0]);
        let result = filter_control(&u_nom, &a, -2.0).unwrap();
        assert_eq!(result.u, DVector::from_vec(vec![2.0, 0.0]));
        assert_eq!(result.mu, 2.0);
        assert!(result.constraint_active);
        assert!(verify_kkt(&result, &u_nom, &a, -2.0));
    }

    #[test]
    fn boundary_activation_takes_inactive_branch() {
        // a.u_nom + c = 0 exactly: the nominal input already sits on the
        // boundary and must be returned unchanged with mu = 0.
        let u_nom = DVector::from_vec(vec![2.0, 1.0]);
        let a = RowDVector::from_row_slice(&[1.0, 0.0]);
        let result = filter_control(&u_nom, &a, -2.0).unwrap();
        assert_eq!(result.u, u_nom);
        assert_eq!(result.mu, 0.0);
        assert!(!result.constraint_active);
    }

    #[test]
    fn infeasible_zero_row_is_a_hard_error() {
        let u_nom = DVector::from_vec(vec![0.0, 0.0]);
        let a = RowDVector::zeros(2);
        match filter_control(&u_nom, &a, -0.5) {
            Err(Error::InfeasibleAtState { offset }) => assert_eq!(offset, -0.5),
            other => panic!("expected infeasibility error, got {other:?}"),
        }
    }

    #[test]
    fn tiny_row_treated_as_zero() {
        let u_nom = DVector::from_vec(vec![1.0]);
        let a = RowDVector::from_row_slice(&[1e-13]);
        let result = filter_control(&u_nom, &a, 0.2).unwrap();
        assert_eq!(result.u, u_nom);
        assert!(filter_control(&u_nom, &a, -0.2).is_err());
    }

    #[test]
    fn tampered_multiplier_fails_kkt() {
        let u_nom = DVector::from_vec(vec![0.0, 0.0]);
        let a = RowDVector::from_row_slice(&[1.0, 0.0]);
        let mut result = filter_control(&u_nom, &a, -2.0).unwrap();
        result.mu = -result.mu;
        assert!(!verify_kkt(&result, &u_nom, &a, -2.0));
    }

    #[test]
    fn idempotent_on_feasible_nominal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let dim = rng.gen_range(1..=4);
            let u_nom = DVector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0));
            let a = RowDVector::from_fn(dim, |_, _| rng.gen_range(-3.0..3.0));
            let slack = (&a * &u_nom)[0];
            // Choose c so the constraint holds at u_nom.
            let c = -slack + rng.gen_range(0.0..2.0);
            let result = filter_control(&u_nom, &a, c).unwrap();
            assert_eq!(result.u, u_nom, "feasible nominal must pass through bit-exactly");
            assert_eq!(result.mu, 0.0);
        }
    }

    /// Brute-force oracle: dense line search along a^T from the nominal input
    /// (the minimizer must lie on the ray u_nom + t a^T, t >= 0; walking the
    /// ray needs no structural knowledge beyond feasibility checks).
    fn brute_force_projection(
        u_nom: &DVector<f64>,
        a: &RowDVector<f64>,
        c: f64,
    ) -> DVector<f64> {
        let feasible = |u: &DVector<f64>| (a * u)[0] + c >= 0.0;
        if feasible(u_nom) {
            return u_nom.clone();
        }
        // Find an upper bracket by doubling, then bisect the feasibility
        // boundary to 1e-12 resolution in t.
        let dir = a.transpose();
        let mut hi = 1e-9;
        while !feasible(&(u_nom + &dir * hi)) {
            hi *= 2.0;
            assert!(hi < 1e12, "bracket search failed");
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasible(&(u_nom + &dir * mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        u_nom + &dir * hi
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..2000 {
            let dim = rng.gen_range(1..=4);
            let u_nom = DVector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0));
            let mut a = RowDVector::from_fn(dim, |_, _| rng.gen_range(-3.0..3.0));
            if a.norm() < 1e-6 {
                a[0] = 1.0;
            }
            let c = rng.gen_range(-10.0..10.0);
            let result = filter_control(&u_nom, &a, c).unwrap();
            let oracle = brute_force_projection(&u_nom, &a, c);
            assert!(
                (&result.u - &oracle).norm() < 1e-6,
                "closed form {:?} vs oracle {:?}",
                result.u,
                oracle
            );
            assert!(verify_kkt(&result, &u_nom, &a, c));
        }
    }

    #[test]
    fn minimality_against_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let dim = rng.gen_range(1..=4);
            let u_nom = DVector::from_fn(dim, |_, _| rng.gen_range(-5.0..5.0));
            let mut a = RowDVector::from_fn(dim, |_, _| rng.gen_range(-3.0..3.0));
            if a.norm() < 1e-6 {
                a[0] = 1.0;
            }
            let c = rng.gen_range(-10.0..10.0);
            let result = filter_control(&u_nom, &a, c).unwrap();
            let d_star = (&result.u - &u_nom).norm();
            for _ in 0..100 {
                let w = DVector::from_fn(dim, |_, _| rng.gen_range(-20.0..20.0));
                if (&a * &w)[0] + c >= 0.0 {
                    assert!(d_star <= (&w - &u_nom).norm() + 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn kkt_holds_on_arbitrary_instances(
            u in prop::collection::vec(-50.0f64..50.0, 1..4),
            row in prop::collection::vec(-10.0f64..10.0, 1..4),
            c in -100.0f64..100.0,
        ) {
            let dim = u.len().min(row.len());
            let u_nom = DVector::from_vec(u[..dim].to_vec());
            let a = RowDVector::from_row_slice(&row[..dim]);
            if let Ok(result) = filter_control(&u_nom, &a, c) {
                prop_assert!(verify_kkt(&result, &u_nom, &a, c));
                prop_assert!(result.mu >= 0.0);
                prop_assert!(result.constraint_value >= -1e-9);
                prop_assert!(result.mu * result.constraint_value <= 1e-9 * (1.0 + result.mu));
            }
        }
    }
}
