//! Packaged reference scenarios shared by the test suites and the CLI: the
//! rigid-body attitude stabilization run over three overlapping orientation
//! cells, and two planar double-integrator runs (regulation from outside the
//! safe set, and a coasting traversal through the singular point).

use std::sync::Arc;

use nalgebra::{DVector, Matrix3, RowDVector, Vector3};

use crate::chain::{BarrierChain, ChiTruncation, ConstraintProvider, LieTerms};
use crate::classk::ExtendedClassK;
use crate::error::{Error, Result};
use crate::sim::{
    integrate_closed_loop, BarrierController, DisturbanceFn, FilterMode, NominalFn, Trajectory,
};
use crate::systems::attitude::{
    additive_signal, attitude_analytic_provider, attitude_constraint_provider,
    nominal_attitude_controller, pack_state, unpack_state, AttitudeModel, AttitudeParams,
};
use crate::systems::double_integrator::{
    double_integrator_jet_provider, double_integrator_model, DiskConstraint, DoubleIntegrator,
};
use crate::systems::so3::{log_map, rodrigues_exp};
use crate::verify::{SamplerKind, SamplingBox};

/// Time windows in which the filtered input departs from the nominal one in
/// the standard additive-signal attitude run.
pub const REFERENCE_DISCREPANCY_WINDOWS: [(f64, f64); 4] =
    [(4.8, 5.6), (9.4, 10.4), (21.0, 24.0), (30.0, 33.0)];

/// The attitude stabilization scenario: start ten degrees inside the first
/// cell, target at the identity, three cells strung thirty degrees apart.
pub struct AttitudeScenario {
    pub params: AttitudeParams,
    pub x0: DVector<f64>,
    pub target: Matrix3<f64>,
}

pub fn attitude_scenario() -> Result<AttitudeScenario> {
    let deg = |d: f64| d * std::f64::consts::PI / 180.0;
    let tilted = Vector3::new(0.0, 0.447, 0.894).normalize();
    let r3 = rodrigues_exp(&Vector3::x(), deg(10.0))?;
    let r2 = rodrigues_exp(&Vector3::y(), deg(30.0))? * r3;
    let r1 = rodrigues_exp(&tilted, deg(30.0))? * r2;
    let r0 = rodrigues_exp(&Vector3::x(), deg(10.0))? * r1;
    let params = AttitudeParams::new(
        AttitudeParams::standard_inertia(),
        vec![r1, r2, r3],
        0.1206,
        0.05,
        0.2,
        0.2,
        0.6,
    )?;
    Ok(AttitudeScenario {
        params,
        x0: pack_state(&r0, &Vector3::zeros()),
        target: Matrix3::identity(),
    })
}

impl AttitudeScenario {
    pub fn model(&self) -> AttitudeModel {
        AttitudeModel::new(self.params.clone())
    }

    fn alphas(&self) -> Vec<ExtendedClassK> {
        vec![ExtendedClassK::identity(), ExtendedClassK::identity()]
    }

    /// The chain on the automatic-differentiation provider.
    pub fn chain(&self) -> Result<BarrierChain> {
        BarrierChain::truncated(
            Arc::new(attitude_constraint_provider(&self.params)?),
            ChiTruncation::cubic(),
            self.params.xi(),
            self.alphas(),
        )
    }

    /// The chain on the hand-derived provider; interchangeable with
    /// [`Self::chain`] and cheaper, so verification sweeps prefer it.
    pub fn analytic_chain(&self) -> Result<BarrierChain> {
        BarrierChain::truncated(
            Arc::new(attitude_analytic_provider(&self.params)),
            ChiTruncation::cubic(),
            self.params.xi(),
            self.alphas(),
        )
    }

    /// The saturated stabilizing law, optionally summed with the additive
    /// excitation signal; the sum is what the filter treats as nominal.
    /// Total on finite 12-dimensional states, which is what the integrator
    /// guarantees.
    pub fn nominal(&self, with_additive: bool) -> NominalFn {
        let params = self.params.clone();
        Arc::new(move |t: f64, x: &DVector<f64>| {
            let (r, omega) = unpack_state(x).expect("well-formed attitude state");
            let mut u = nominal_attitude_controller(&r, &omega, &params);
            if with_additive {
                u += additive_signal(t);
            }
            DVector::from_column_slice(u.as_slice())
        })
    }

    pub fn controller(
        &self,
        mode: FilterMode,
        with_additive: bool,
    ) -> Result<BarrierController> {
        BarrierController::new(self.chain()?, self.nominal(with_additive), mode)
    }

    /// Closed-loop run from the scenario start under the given filter mode.
    pub fn simulate(
        &self,
        mode: FilterMode,
        with_additive: bool,
        t_final: f64,
        dt: f64,
    ) -> Result<Trajectory> {
        let controller = self.controller(mode, with_additive)?;
        integrate_closed_loop(&self.model(), &controller, &self.x0, t_final, dt)
    }

    /// One axis-aligned sampling box per cell: rotation entries within
    /// `attitude_margin` of the cell center, rates within `rate_bound`.
    pub fn cell_boxes(
        &self,
        count_per_cell: usize,
        seed: u64,
        attitude_margin: f64,
        rate_bound: f64,
    ) -> Result<Vec<SamplingBox>> {
        self.params
            .cell_centers()
            .iter()
            .enumerate()
            .map(|(idx, center)| {
                let center_state = pack_state(center, &Vector3::zeros());
                let mut lower = center_state.clone();
                let mut upper = center_state;
                for k in 0..9 {
                    lower[k] -= attitude_margin;
                    upper[k] += attitude_margin;
                }
                for k in 9..12 {
                    lower[k] = -rate_bound;
                    upper[k] = rate_bound;
                }
                SamplingBox::new(lower, upper, count_per_cell, seed + idx as u64, SamplerKind::Uniform)
            })
            .collect()
    }

    /// Representative states of the input-annihilating set of the raw
    /// constraint (where `L_g L_f b = 0`): the cell centers (every
    /// transition sits on a flat seam there) and the balance points on the
    /// geodesics between overlapping cells. Rates are zero; the input row
    /// does not depend on them.
    pub fn singular_states(&self) -> Result<Vec<DVector<f64>>> {
        let provider = attitude_analytic_provider(&self.params);
        let centers = self.params.cell_centers();
        let mut states: Vec<DVector<f64>> = centers
            .iter()
            .map(|center| pack_state(center, &Vector3::zeros()))
            .collect();
        for pair in centers.windows(2) {
            states.push(geodesic_balance_state(&provider, &pair[0], &pair[1])?);
        }
        Ok(states)
    }
}

/// The input row of the raw (untruncated) constraint: `L_g b` for relative
/// order 1 and `L_g L_f b` for relative order 2.
pub fn raw_input_row(
    provider: &dyn ConstraintProvider,
    x: &DVector<f64>,
) -> Result<RowDVector<f64>> {
    Ok(match provider.lie_terms(x)? {
        LieTerms::FirstOrder { lg_b, .. } => lg_b,
        LieTerms::SecondOrder { lg_lf_b, .. } => lg_lf_b,
    })
}

/// Finds the state on the geodesic between two overlapping cell centers
/// where the raw input row vanishes, by bisecting the row's signed
/// projection onto a fixed reference direction. The truncated chain's row
/// is identically zero on the whole geodesic (it runs through the deep
/// interior), so the search must use the raw row.
fn geodesic_balance_state(
    provider: &dyn ConstraintProvider,
    r_a: &Matrix3<f64>,
    r_b: &Matrix3<f64>,
) -> Result<DVector<f64>> {
    let (axis, angle) = log_map(&(r_a.transpose() * r_b))?;
    let state_at = |t: f64| -> Result<DVector<f64>> {
        let r = r_a * rodrigues_exp(&axis, angle * t)?;
        Ok(pack_state(&r, &Vector3::zeros()))
    };
    let row_at = |t: f64| -> Result<RowDVector<f64>> { raw_input_row(provider, &state_at(t)?) };

    // Scan inward from both cells for a sign change of the projected row.
    let mut reference: Option<RowDVector<f64>> = None;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for k in 0..=60 {
        let t = 0.2 + 0.6 * k as f64 / 60.0;
        let row = row_at(t)?;
        if reference.is_none() {
            if row.norm() < 1e-6 {
                continue;
            }
            reference = Some(row.clone() / row.norm());
        }
        let sigma = row.dot(reference.as_ref().unwrap());
        if let Some((t_prev, s_prev)) = prev {
            if s_prev * sigma < 0.0 {
                bracket = Some((t_prev, t));
                break;
            }
        }
        prev = Some((t, sigma));
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::PreconditionViolated(
            "no constraint-row sign change along the geodesic; cells may not overlap".into(),
        )
    })?;
    let direction = reference.unwrap();
    let mut sigma_lo = row_at(lo)?.dot(&direction);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let sigma_mid = row_at(mid)?.dot(&direction);
        if sigma_mid == 0.0 {
            return state_at(mid);
        }
        if (sigma_mid > 0.0) == (sigma_lo > 0.0) {
            lo = mid;
            sigma_lo = sigma_mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    state_at(0.5 * (lo + hi))
}

/// A deterministic matched disturbance with norm at most `bound` for all t.
pub fn bounded_disturbance(bound: f64) -> DisturbanceFn {
    Arc::new(move |t: f64| {
        let raw = Vector3::new((1.3 * t).sin(), (2.3 * t + 1.0).sin(), (3.1 * t + 2.0).sin());
        let w = raw * (bound / 3.0f64.sqrt());
        DVector::from_column_slice(w.as_slice())
    })
}

/// A planar double-integrator scenario bundle.
pub struct DiskScenario {
    pub model: DoubleIntegrator,
    pub constraint: DiskConstraint,
    pub xi: f64,
    pub x0: DVector<f64>,
    nominal: NominalFn,
}

impl DiskScenario {
    fn alphas() -> Vec<ExtendedClassK> {
        vec![ExtendedClassK::identity(), ExtendedClassK::identity()]
    }

    /// The chain on the closed-form provider.
    pub fn chain(&self) -> Result<BarrierChain> {
        BarrierChain::truncated(
            Arc::new(self.constraint.clone()),
            ChiTruncation::cubic(),
            self.xi,
            Self::alphas(),
        )
    }

    /// The chain on the automatic-differentiation provider.
    pub fn jet_chain(&self) -> Result<BarrierChain> {
        BarrierChain::truncated(
            Arc::new(double_integrator_jet_provider(self.constraint.radius())?),
            ChiTruncation::cubic(),
            self.xi,
            Self::alphas(),
        )
    }

    pub fn nominal(&self) -> NominalFn {
        self.nominal.clone()
    }

    pub fn controller(&self, mode: FilterMode) -> Result<BarrierController> {
        BarrierController::new(self.chain()?, self.nominal(), mode)
    }

    pub fn simulate(&self, mode: FilterMode, t_final: f64, dt: f64) -> Result<Trajectory> {
        let controller = self.controller(mode)?;
        integrate_closed_loop(&self.model, &controller, &self.x0, t_final, dt)
    }

    /// A box covering the safe set and a band around it.
    pub fn full_box(&self, count: usize, seed: u64) -> Result<SamplingBox> {
        let reach = 1.5 * self.constraint.radius();
        SamplingBox::new(
            DVector::from_element(4, -reach),
            DVector::from_element(4, reach),
            count,
            seed,
            SamplerKind::Uniform,
        )
    }

    /// The singular sheet p = 0 with velocities swept over a box.
    pub fn singular_sheet_box(&self, count: usize, seed: u64) -> Result<SamplingBox> {
        let reach = 1.5 * self.constraint.radius();
        SamplingBox::new(
            DVector::from_vec(vec![0.0, 0.0, -reach, -reach]),
            DVector::from_vec(vec![0.0, 0.0, reach, reach]),
            count,
            seed,
            SamplerKind::Uniform,
        )
    }
}

/// Regulation from outside the safe set: the margins start negative and an
/// overdamped proportional-derivative law pulls the point to a setpoint just
/// inside the safe disk. The setpoint sits below the truncation level on
/// purpose: approaching b = xi from below at speed shrinks the constraint
/// row (chi' ~ eta^2) faster than the chi'' drift deficit (~ eta b_dot^2 /
/// xi^2) decays, and the projection stiffens without bound. Parking the
/// closed loop short of the truncation band keeps the recovery gentle while
/// the filter still engages on the way in.
pub fn disk_regulation_scenario() -> Result<DiskScenario> {
    let (model, constraint) = double_integrator_model(2.0)?;
    let setpoint = 1.9;
    let nominal: NominalFn = Arc::new(move |_t: f64, x: &DVector<f64>| {
        DVector::from_vec(vec![
            -0.3 * (x[0] - setpoint) - 1.1 * x[2],
            -0.3 * x[1] - 1.1 * x[3],
        ])
    });
    Ok(DiskScenario {
        model,
        constraint,
        xi: 1.0,
        x0: DVector::from_vec(vec![2.5, 0.0, 0.0, 0.0]),
        nominal,
    })
}

/// Coasting traversal straight through the singular point p = 0 with an
/// idle nominal law; the filter must brake on the far side of the disk.
pub fn disk_traversal_scenario() -> Result<DiskScenario> {
    let (model, constraint) = double_integrator_model(2.0)?;
    let nominal: NominalFn = Arc::new(|_t: f64, _x: &DVector<f64>| DVector::zeros(2));
    Ok(DiskScenario {
        model,
        constraint,
        xi: 3.5,
        x0: DVector::from_vec(vec![-1.5, 0.0, 0.9, 0.0]),
        nominal,
    })
}
