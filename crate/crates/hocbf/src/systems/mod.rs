//! Reference control-affine plants and their barrier providers: a planar
//! double integrator with a disk constraint, and a 12-state embedded
//! rigid-body attitude system whose safe region is a union of smoothly
//! blended rotation cells.

pub mod attitude;
pub mod double_integrator;
pub mod so3;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// A control-affine plant `x_dot = f(x) + g(x) u`.
pub trait SystemModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn input_dim(&self) -> usize;

    /// Drift term f(x).
    fn drift(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Actuation matrix g(x), state_dim x input_dim.
    fn actuation(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn label(&self) -> &str;

    /// Full controlled vector field f(x) + g(x) u.
    fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.drift(x)? + self.actuation(x)? * u)
    }
}

pub use attitude::{
    additive_signal, attitude_analytic_provider, attitude_constraint_provider, attitude_drift,
    cell_barrier, nominal_attitude_controller, smooth_transition, AttitudeModel, AttitudeParams,
};
pub use double_integrator::{
    double_integrator_jet_provider, double_integrator_model, DiskConstraint, DoubleIntegrator,
};
pub use so3::{hat, log_map, rodrigues_exp, vee};
