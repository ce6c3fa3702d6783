//! Vectorial comparison machinery used to validate the invariance and
//! stability theory numerically: the forced psi-dynamics, the auxiliary
//! cascade it dominates, quasimonotonicity of the right-hand sides, and the
//! domination check itself.
//!
//! The forced system is
//!
//! ```text
//! psi_dot_{k-1} = -alpha_k(psi_{k-1}) + psi_k   (k < r)
//! psi_dot_{r-1} = -alpha_r(psi_{r-1}) + forcing(t)
//! ```
//!
//! and the auxiliary cascade is the same with the forcing dropped. With
//! nonnegative forcing and dominated initial data, the cascade's solution
//! stays below the forced solution component-wise; since the cascade is
//! globally asymptotically stable, the forced margins are attracted to the
//! nonnegative orthant.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classk::ExtendedClassK;
use crate::error::{Error, Result};

/// State of the auxiliary cascade (m_0 .. m_{r-1}).
#[derive(Debug, Clone)]
pub struct AuxiliaryState {
    pub m: DVector<f64>,
}

impl From<DVector<f64>> for AuxiliaryState {
    fn from(m: DVector<f64>) -> Self {
        AuxiliaryState { m }
    }
}

type ForcingFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// State of the forced psi-dynamics together with its forcing term (the
/// trajectory-dependent psi_r along a closed-loop run, or any surrogate).
#[derive(Clone)]
pub struct ForcedPsiState {
    pub psi: DVector<f64>,
    pub forcing: ForcingFn,
}

impl ForcedPsiState {
    pub fn new<F>(psi: DVector<f64>, forcing: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ForcedPsiState {
            psi,
            forcing: Arc::new(forcing),
        }
    }

    /// Forcing from logged samples with linear interpolation, clamped to the
    /// end values outside the sampled window.
    pub fn from_samples(psi: DVector<f64>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::GridMismatch {
                left: times.len(),
                right: values.len(),
            });
        }
        if times.is_empty() {
            return Err(Error::invalid("forcing sample set must be nonempty"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("forcing sample times must be increasing"));
        }
        Ok(ForcedPsiState {
            psi,
            forcing: Arc::new(move |t: f64| {
                if t <= times[0] {
                    return values[0];
                }
                if t >= *times.last().unwrap() {
                    return *values.last().unwrap();
                }
                let idx = times.partition_point(|&s| s <= t);
                let (t0, t1) = (times[idx - 1], times[idx]);
                let w = (t - t0) / (t1 - t0);
                values[idx - 1] * (1.0 - w) + values[idx] * w
            }),
        })
    }
}

impl std::fmt::Debug for ForcedPsiState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForcedPsiState")
            .field("psi", &self.psi)
            .finish_non_exhaustive()
    }
}

/// Right-hand side of the auxiliary cascade; component k-1 is
/// `-alpha_k(m_{k-1}) + m_k`, the last component `-alpha_r(m_{r-1})`.
pub fn auxiliary_rhs(state: &AuxiliaryState, alphas: &[ExtendedClassK]) -> Result<DVector<f64>> {
    let r = alphas.len();
    if state.m.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: state.m.len(),
        });
    }
    let mut rhs = DVector::zeros(r);
    for k in 0..r {
        rhs[k] = -alphas[k].eval(state.m[k])?;
        if k + 1 < r {
            rhs[k] += state.m[k + 1];
        }
    }
    Ok(rhs)
}

/// Right-hand side of the forced psi-dynamics: identical to the cascade
/// except the last component gains `+forcing(t)`.
pub fn forced_psi_rhs(
    state: &ForcedPsiState,
    alphas: &[ExtendedClassK],
    t: f64,
) -> Result<DVector<f64>> {
    let aux = AuxiliaryState {
        m: state.psi.clone(),
    };
    let mut rhs = auxiliary_rhs(&aux, alphas)?;
    let r = alphas.len();
    rhs[r - 1] += (state.forcing)(t);
    Ok(rhs)
}

/// Checks component-wise domination `m_k(t) <= psi_k(t) + tol` on a shared
/// time grid. The hypotheses of the comparison argument are enforced, not
/// assumed: mismatched grids are an error, and `m(t0) > psi(t0)` in any
/// component rejects the input without making a claim.
pub fn check_domination(
    m_traj: &[AuxiliaryState],
    psi_traj: &[DVector<f64>],
    tol: f64,
) -> Result<bool> {
    if m_traj.len() != psi_traj.len() {
        return Err(Error::GridMismatch {
            left: m_traj.len(),
            right: psi_traj.len(),
        });
    }
    if m_traj.is_empty() {
        return Err(Error::invalid("domination check needs at least one sample"));
    }
    for (m, psi) in m_traj.iter().zip(psi_traj) {
        if m.m.len() != psi.len() {
            return Err(Error::DimensionMismatch {
                expected: psi.len(),
                got: m.m.len(),
            });
        }
    }
    let initial_ok = m_traj[0]
        .m
        .iter()
        .zip(psi_traj[0].iter())
        .all(|(m, p)| m <= p);
    if !initial_ok {
        return Err(Error::PreconditionViolated(
            "domination requires m(t0) <= psi(t0) component-wise".into(),
        ));
    }
    Ok(m_traj
        .iter()
        .zip(psi_traj)
        .all(|(m, psi)| m.m.iter().zip(psi.iter()).all(|(mk, pk)| *mk <= *pk + tol)))
}

/// Statistical check of quasimonotone nondecrease: for sampled pairs with
/// `x_i = y_i` and `x <= y` component-wise, the i-th component of the field
/// must not decrease. Sampling is seeded internally, so the verdict is
/// deterministic.
pub fn check_quasimonotone<F>(rhs: F, dim: usize, samples: usize) -> bool
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(0x71_05_AB);
    for _ in 0..samples {
        let y = DVector::from_fn(dim, |_, _| rng.gen_range(-10.0..10.0));
        let py = rhs(&y);
        for i in 0..dim {
            let mut x = y.clone();
            for j in 0..dim {
                if j != i {
                    x[j] = y[j] - rng.gen_range(0.0..5.0);
                }
            }
            let px = rhs(&x);
            if px[i] > py[i] + 1e-12 {
                return false;
            }
        }
    }
    true
}
