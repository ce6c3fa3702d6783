//! Rotation-matrix utilities: the hat/vee isomorphism between R^3 and skew
//! matrices, the Rodrigues exponential, and the matrix logarithm used to
//! parameterize geodesics between orientations.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Maps v to the skew-symmetric matrix [v]x with hat(v) * w = v x w.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v[2], v[1], //
        v[2], 0.0, -v[0], //
        -v[1], v[0], 0.0,
    )
}

/// Inverse of [`hat`] on skew-symmetric matrices.
pub fn vee(m: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let symmetric_part = m + m.transpose();
    if symmetric_part.norm() >= 1e-10 {
        return Err(Error::invalid(format!(
            "vee requires a skew-symmetric matrix; symmetric part has norm {:.3e}",
            symmetric_part.norm()
        )));
    }
    Ok(Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

/// Rotation by `angle` radians about the unit vector `axis`:
/// `I + sin(angle) [a]x + (1 - cos(angle)) [a]x^2`.
pub fn rodrigues_exp(axis: &Vector3<f64>, angle: f64) -> Result<Matrix3<f64>> {
    if (axis.norm() - 1.0).abs() >= 1e-10 {
        return Err(Error::invalid(format!(
            "rodrigues_exp requires a unit axis, got norm {:.12}",
            axis.norm()
        )));
    }
    if !angle.is_finite() {
        return Err(Error::invalid("rodrigues_exp requires a finite angle"));
    }
    let k = hat(axis);
    Ok(Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos()))
}

/// Axis-angle decomposition of a rotation matrix, with angle in [0, pi].
/// The axis is arbitrary (unit e1) at angle 0; angles within 1e-6 of pi are
/// rejected since the axis extraction below degenerates there and no caller
/// in this crate needs half-turn logs.
pub fn log_map(r: &Matrix3<f64>) -> Result<(Vector3<f64>, f64)> {
    let orth = r.transpose() * r - Matrix3::identity();
    if orth.norm() >= 1e-8 {
        return Err(Error::invalid(format!(
            "log_map requires an orthonormal matrix; R^T R - I has norm {:.3e}",
            orth.norm()
        )));
    }
    let cos_angle = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = cos_angle.acos();
    if angle < 1e-12 {
        return Ok((Vector3::x(), 0.0));
    }
    if angle > std::f64::consts::PI - 1e-6 {
        return Err(Error::invalid(
            "log_map does not support rotations within 1e-6 of a half turn",
        ));
    }
    let axis = vee(&((r - r.transpose()) / (2.0 * angle.sin())))?;
    Ok((axis, angle))
}
