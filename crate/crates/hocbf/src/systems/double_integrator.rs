//! Planar double integrator with a disk constraint: state (p, v) in R^4,
//! dynamics p_dot = v, v_dot = u, and barrier b = d^2 - |p|^2 keeping the
//! position inside the disk of radius d. The constraint has least relative
//! degree 2 (b does not depend on v), and its singular set is p = 0, where
//! b attains its maximum d^2.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::chain::{ConstraintProvider, JetLieProvider, LieTerms};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::systems::SystemModel;

/// The plant: 4 states (p1, p2, v1, v2), 2 inputs.
#[derive(Debug, Clone)]
pub struct DoubleIntegrator;

impl SystemModel for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_state(x)?;
        Ok(DVector::from_vec(vec![x[2], x[3], 0.0, 0.0]))
    }

    fn actuation(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_state(x)?;
        let mut g = DMatrix::zeros(4, 2);
        g[(2, 0)] = 1.0;
        g[(3, 1)] = 1.0;
        Ok(g)
    }

    fn label(&self) -> &str {
        "double-integrator"
    }
}

fn check_state(x: &DVector<f64>) -> Result<()> {
    if x.len() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("double-integrator state"));
    }
    Ok(())
}

/// Analytic constraint provider for b = d^2 - |p|^2.
#[derive(Debug, Clone)]
pub struct DiskConstraint {
    d: f64,
}

impl DiskConstraint {
    pub fn radius(&self) -> f64 {
        self.d
    }
}

impl ConstraintProvider for DiskConstraint {
    fn relative_order(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn eval_b(&self, x: &DVector<f64>) -> Result<f64> {
        check_state(x)?;
        Ok(self.d * self.d - (x[0] * x[0] + x[1] * x[1]))
    }

    fn lie_terms(&self, x: &DVector<f64>) -> Result<LieTerms> {
        check_state(x)?;
        let (p1, p2, v1, v2) = (x[0], x[1], x[2], x[3]);
        Ok(LieTerms::SecondOrder {
            lf_b: -2.0 * (p1 * v1 + p2 * v2),
            lf2_b: -2.0 * (v1 * v1 + v2 * v2),
            lg_lf_b: RowDVector::from_vec(vec![-2.0 * p1, -2.0 * p2]),
        })
    }
}

/// The plant together with its analytic disk-constraint provider.
pub fn double_integrator_model(d: f64) -> Result<(DoubleIntegrator, DiskConstraint)> {
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::invalid(format!(
            "disk radius must be positive and finite, got {d}"
        )));
    }
    Ok((DoubleIntegrator, DiskConstraint { d }))
}

/// Forward-differentiation provider for the same constraint, used to
/// cross-check the analytic Lie terms.
pub fn double_integrator_jet_provider(d: f64) -> Result<JetLieProvider> {
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::invalid(format!(
            "disk radius must be positive and finite, got {d}"
        )));
    }
    let flow = Arc::new(|x: &[Jet2], u: &DVector<f64>| {
        vec![
            x[2],
            x[3],
            Jet2::constant(u[0]),
            Jet2::constant(u[1]),
        ]
    });
    let barrier = Arc::new(move |x: &[Jet2]| Jet2::constant(d * d) - x[0] * x[0] - x[1] * x[1]);
    JetLieProvider::new(4, 2, 2, flow, barrier)
}
