//! Extended class-K functions: strictly increasing maps with alpha(0) = 0,
//! defined on all of R. These sit between the chain levels of the psi-series
//! and shape how fast margins are allowed to decay.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A strictly increasing function alpha with alpha(0) = 0, evaluable together
/// with its first derivative. Immutable after construction and safe to share
/// across threads.
#[derive(Clone)]
pub struct ExtendedClassK {
    kind: Kind,
}

#[derive(Clone)]
enum Kind {
    Linear { gain: f64 },
    Custom { eval: ScalarFn, derivative: ScalarFn },
}

/// Deterministic grid used to spot-check custom functions at construction.
/// Global strict monotonicity is not decidable for arbitrary closures; a
/// sampled check is the testable surrogate.
const VALIDATION_GRID: std::ops::RangeInclusive<i32> = -20..=20;

fn grid_points() -> impl Iterator<Item = f64> {
    VALIDATION_GRID.map(|k| 0.5 * k as f64)
}

impl ExtendedClassK {
    /// The identity map v -> v.
    pub fn identity() -> Self {
        ExtendedClassK {
            kind: Kind::Linear { gain: 1.0 },
        }
    }

    /// A linear map v -> gain * v with gain > 0.
    pub fn linear(gain: f64) -> Result<Self> {
        if !gain.is_finite() || gain <= 0.0 {
            return Err(Error::invalid(format!(
                "class-K gain must be a positive finite real, got {gain}"
            )));
        }
        Ok(ExtendedClassK {
            kind: Kind::Linear { gain },
        })
    }

    /// A user-supplied function with its derivative. The pair is spot-checked
    /// on a fixed grid: alpha(0) = 0 exactly, strict monotonicity between
    /// neighboring grid points, and a strictly positive derivative.
    pub fn custom<F, D>(eval: F, derivative: D) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if eval(0.0) != 0.0 {
            return Err(Error::invalid(format!(
                "custom class-K function must satisfy alpha(0) = 0, got {}",
                eval(0.0)
            )));
        }
        let mut prev: Option<f64> = None;
        for v in grid_points() {
            let y = eval(v);
            let dy = derivative(v);
            if !y.is_finite() || !dy.is_finite() {
                return Err(Error::invalid(format!(
                    "custom class-K function returned a non-finite value at v = {v}"
                )));
            }
            if dy <= 0.0 {
                return Err(Error::invalid(format!(
                    "custom class-K derivative must be positive, got {dy} at v = {v}"
                )));
            }
            if let Some(p) = prev {
                if y <= p {
                    return Err(Error::invalid(format!(
                        "custom class-K function is not strictly increasing near v = {v}"
                    )));
                }
            }
            prev = Some(y);
        }
        Ok(ExtendedClassK {
            kind: Kind::Custom {
                eval: Arc::new(eval),
                derivative: Arc::new(derivative),
            },
        })
    }

    /// Returns alpha(v). Defined for negative v (extended domain).
    pub fn eval(&self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::invalid(format!(
                "class-K function evaluated at non-finite v = {v}"
            )));
        }
        Ok(match &self.kind {
            Kind::Linear { gain } => gain * v,
            Kind::Custom { eval, .. } => eval(v),
        })
    }

    /// Returns d alpha / dv at v.
    pub fn derivative(&self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::invalid(format!(
                "class-K derivative evaluated at non-finite v = {v}"
            )));
        }
        Ok(match &self.kind {
            Kind::Linear { gain } => *gain,
            Kind::Custom { derivative, .. } => derivative(v),
        })
    }
}

impl fmt::Debug for ExtendedClassK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Linear { gain } => write!(f, "ExtendedClassK::Linear({gain})"),
            Kind::Custom { .. } => write!(f, "ExtendedClassK::Custom"),
        }
    }
}
