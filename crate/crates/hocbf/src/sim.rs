//! Fixed-step closed-loop simulation: classical 4th-order integration of a
//! [`SystemModel`] under a controller, with per-step logging of states,
//! applied and nominal inputs, psi margins, the raw barrier value, and the
//! filter multiplier; plus boundary-event extraction over the logs.

use std::sync::Arc;

use nalgebra::DVector;

use crate::chain::BarrierChain;
use crate::error::{Error, Result};
use crate::filter::filter_control;
use crate::systems::SystemModel;

/// State-norm bound treated as divergence (finite escape shows up as a clean
/// error instead of a hang or inf propagation).
pub const DIVERGENCE_NORM: f64 = 1e9;

/// One RK4 step of `x' = rhs(t, x)`.
pub fn rk4_step<F>(rhs: &F, t: f64, x: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = rhs(t, x);
    let k2 = rhs(t + dt / 2.0, &(x + &k1 * (dt / 2.0)));
    let k3 = rhs(t + dt / 2.0, &(x + &k2 * (dt / 2.0)));
    let k4 = rhs(t + dt, &(x + &k3 * dt));
    x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

/// Integrates `x' = rhs(t, x)` from t0 to t_final on a fixed grid, returning
/// the time grid and the states (both of length steps + 1).
pub fn rk4_integrate<F>(
    rhs: F,
    x0: DVector<f64>,
    t0: f64,
    t_final: f64,
    dt: f64,
) -> (Vec<f64>, Vec<DVector<f64>>)
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    assert!(dt > 0.0 && t_final >= t0, "rk4_integrate needs dt > 0, t_final >= t0");
    let steps = ((t_final - t0) / dt).round().max(0.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0;
    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        times.push(t);
        states.push(x.clone());
        if k < steps {
            x = rk4_step(&rhs, t, &x, dt);
        }
    }
    (times, states)
}

/// Logged closed-loop run. All populated arrays share the grid length; the
/// diagnostic arrays (psi_values, barrier_b, mu) are empty when the
/// controller carries no barrier chain.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub nominal_inputs: Vec<DVector<f64>>,
    pub psi_values: Vec<DVector<f64>>,
    pub barrier_b: Vec<f64>,
    pub mu: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn has_diagnostics(&self) -> bool {
        !self.barrier_b.is_empty()
    }

    /// Grid step; meaningful for trajectories of at least two samples.
    pub fn step(&self) -> Option<f64> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }

    /// Checks the shared-length and constant-step invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0 {
            return Err(Error::invalid("trajectory must hold at least one sample"));
        }
        let full = [self.states.len(), self.inputs.len(), self.nominal_inputs.len()];
        if full.iter().any(|&len| len != n) {
            return Err(Error::GridMismatch {
                left: n,
                right: *full.iter().find(|&&len| len != n).unwrap(),
            });
        }
        for len in [self.psi_values.len(), self.barrier_b.len(), self.mu.len()] {
            if len != 0 && len != n {
                return Err(Error::GridMismatch { left: n, right: len });
            }
        }
        if n >= 2 {
            let dt = self.times[1] - self.times[0];
            if dt <= 0.0 {
                return Err(Error::invalid("trajectory times must be increasing"));
            }
            for w in self.times.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                    return Err(Error::invalid("trajectory grid step must be constant"));
                }
            }
        }
        Ok(())
    }
}

/// Barrier-side log of one control evaluation.
#[derive(Debug, Clone)]
pub struct BarrierDiagnostics {
    /// psi_0 .. psi_{r-1} at the queried state.
    pub psi: DVector<f64>,
    /// Raw constraint value b(x).
    pub b: f64,
    /// KKT multiplier of the filter (0 when inactive or unfiltered).
    pub mu: f64,
}

/// Result of one control evaluation.
#[derive(Debug, Clone)]
pub struct ControlStep {
    pub u: DVector<f64>,
    pub u_nom: DVector<f64>,
    pub diagnostics: Option<BarrierDiagnostics>,
}

/// A feedback law queried along the run. Implementations must be pure
/// functions of (t, x): the integrator re-evaluates them at sub-stage points
/// and relies on identical answers for identical arguments.
pub trait Controller: Send + Sync {
    fn control(&self, t: f64, x: &DVector<f64>) -> Result<ControlStep>;
}

/// Applies a fixed input forever.
#[derive(Debug, Clone)]
pub struct ConstantController {
    pub u: DVector<f64>,
}

impl Controller for ConstantController {
    fn control(&self, _t: f64, _x: &DVector<f64>) -> Result<ControlStep> {
        Ok(ControlStep {
            u: self.u.clone(),
            u_nom: self.u.clone(),
            diagnostics: None,
        })
    }
}

pub type NominalFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Wraps a plain feedback law without any barrier machinery.
#[derive(Clone)]
pub struct NominalController {
    pub law: NominalFn,
}

impl Controller for NominalController {
    fn control(&self, t: f64, x: &DVector<f64>) -> Result<ControlStep> {
        let u = (self.law)(t, x);
        Ok(ControlStep {
            u_nom: u.clone(),
            u,
            diagnostics: None,
        })
    }
}

/// Whether and how the safety filter wraps the nominal law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterMode {
    /// Nominal input passes through; the chain is still evaluated so the
    /// margins of the unfiltered run are logged.
    Off,
    /// Closed-form minimally invasive projection onto the constraint row.
    Standard,
    /// As Standard, with the constraint offset hardened against a matched
    /// input-channel disturbance of the given magnitude bound.
    Robustified { omega_bar: f64 },
}

/// The (possibly filtered) barrier controller: nominal law plus psi-chain
/// constraint row plus closed-form projection.
pub struct BarrierController {
    chain: BarrierChain,
    nominal: NominalFn,
    mode: FilterMode,
}

impl BarrierController {
    pub fn new(chain: BarrierChain, nominal: NominalFn, mode: FilterMode) -> Result<Self> {
        if let FilterMode::Robustified { omega_bar } = mode {
            if !omega_bar.is_finite() || omega_bar < 0.0 {
                return Err(Error::invalid(format!(
                    "disturbance bound omega_bar must be a nonnegative finite real, got {omega_bar}"
                )));
            }
        }
        Ok(BarrierController {
            chain,
            nominal,
            mode,
        })
    }

    pub fn chain(&self) -> &BarrierChain {
        &self.chain
    }
}

impl Controller for BarrierController {
    fn control(&self, t: f64, x: &DVector<f64>) -> Result<ControlStep> {
        // Chain evaluation first: it validates the state, so the nominal
        // closure only ever sees well-formed arguments.
        let eval = self.chain.eval_psi_chain(x)?;
        let u_nom = (self.nominal)(t, x);
        match self.mode {
            FilterMode::Off => Ok(ControlStep {
                u: u_nom.clone(),
                u_nom,
                diagnostics: Some(BarrierDiagnostics {
                    psi: eval.psi,
                    b: eval.b,
                    mu: 0.0,
                }),
            }),
            FilterMode::Standard | FilterMode::Robustified { .. } => {
                let (a, mut c) = self.chain.row_from_eval(&eval)?;
                if let FilterMode::Robustified { omega_bar } = self.mode {
                    // The disturbance shares the input channel, so its Lie
                    // row equals the constraint row a.
                    c -= a.norm() * omega_bar;
                }
                let result = filter_control(&u_nom, &a, c)?;
                Ok(ControlStep {
                    u: result.u,
                    u_nom,
                    diagnostics: Some(BarrierDiagnostics {
                        psi: eval.psi,
                        b: eval.b,
                        mu: result.mu,
                    }),
                })
            }
        }
    }
}

/// How the controller output is sampled within one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputHold {
    /// Re-evaluate the controller at each RK4 sub-stage (closest match to
    /// the continuous closed loop).
    #[default]
    SubStage,
    /// Evaluate once per step at the grid point and hold.
    ZeroOrderHold,
}

pub type DisturbanceFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Integration options beyond the grid itself.
#[derive(Clone, Default)]
pub struct SimOptions {
    pub input_hold: InputHold,
    /// Additive input-channel disturbance w(t): the plant sees u + w(t).
    /// The logs keep the commanded u.
    pub disturbance: Option<DisturbanceFn>,
}

/// Closed-loop run with default options (sub-stage evaluation, no
/// disturbance).
pub fn integrate_closed_loop(
    model: &dyn SystemModel,
    controller: &dyn Controller,
    x0: &DVector<f64>,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_closed_loop_with(model, controller, x0, t_final, dt, &SimOptions::default())
}

/// Closed-loop run: logs at every grid point including t = 0 and t = T.
/// Mid-run failures (divergence, infeasible constraint, non-finite state)
/// discard the logged prefix; use [`integrate_closed_loop_partial`] to keep
/// it.
pub fn integrate_closed_loop_with(
    model: &dyn SystemModel,
    controller: &dyn Controller,
    x0: &DVector<f64>,
    t_final: f64,
    dt: f64,
    options: &SimOptions,
) -> Result<Trajectory> {
    let outcome = integrate_closed_loop_partial(model, controller, x0, t_final, dt, options)?;
    match outcome.failure {
        None => Ok(outcome.trajectory),
        Some(failure) => Err(failure.error),
    }
}

/// A mid-run stop: the time of the step that could not be completed and the
/// error that stopped it.
#[derive(Debug)]
pub struct SimFailure {
    pub t: f64,
    pub error: Error,
}

/// A closed-loop run that tolerates mid-run failure: the logged prefix ends
/// at the last state the integrator could reach, and `failure` carries the
/// stopping error if the horizon was not reached. Runs that stop early are
/// how a finite escape of the continuous loop shows up on a fixed grid.
#[derive(Debug)]
pub struct SimOutcome {
    pub trajectory: Trajectory,
    pub failure: Option<SimFailure>,
}

impl SimOutcome {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// As [`integrate_closed_loop_with`], but mid-run failures return the logged
/// prefix alongside the error instead of discarding it. `Err` is reserved
/// for precondition violations (bad grid, wrong dimensions, non-finite
/// initial state).
pub fn integrate_closed_loop_partial(
    model: &dyn SystemModel,
    controller: &dyn Controller,
    x0: &DVector<f64>,
    t_final: f64,
    dt: f64,
    options: &SimOptions,
) -> Result<SimOutcome> {
    if !(dt > 0.0 && dt <= t_final) {
        return Err(Error::invalid(format!(
            "step dt must satisfy 0 < dt <= T, got dt = {dt}, T = {t_final}"
        )));
    }
    let steps_real = t_final / dt;
    let steps = steps_real.round();
    if (steps_real - steps).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "horizon T = {t_final} must be an integer multiple of dt = {dt}"
        )));
    }
    let steps = steps as usize;
    if x0.len() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.state_dim(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("initial state"));
    }

    let applied = |u: &DVector<f64>, t: f64| -> Result<DVector<f64>> {
        let mut u = u.clone();
        if u.len() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                got: u.len(),
            });
        }
        if let Some(w) = &options.disturbance {
            u += w(t);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("applied input"));
        }
        Ok(u)
    };
    let stage_input = |t_s: f64, x_s: &DVector<f64>, held: &DVector<f64>| -> Result<DVector<f64>> {
        match options.input_hold {
            InputHold::ZeroOrderHold => applied(held, t_s),
            InputHold::SubStage => applied(&controller.control(t_s, x_s)?.u, t_s),
        }
    };
    let advance = |x: &DVector<f64>, u_held: &DVector<f64>, t: f64| -> Result<DVector<f64>> {
        let u1 = applied(u_held, t)?;
        let f1 = model.vector_field(x, &u1)?;
        let t_half = t + dt / 2.0;
        let x2 = x + &f1 * (dt / 2.0);
        let f2 = model.vector_field(&x2, &stage_input(t_half, &x2, u_held)?)?;
        let x3 = x + &f2 * (dt / 2.0);
        let f3 = model.vector_field(&x3, &stage_input(t_half, &x3, u_held)?)?;
        let x4 = x + &f3 * dt;
        let f4 = model.vector_field(&x4, &stage_input(t + dt, &x4, u_held)?)?;
        let next = x + (f1 + (f2 + f3) * 2.0 + f4) * (dt / 6.0);

        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("simulated state"));
        }
        let norm = next.norm();
        if norm > DIVERGENCE_NORM {
            return Err(Error::Diverged { t: t + dt, norm });
        }
        Ok(next)
    };

    let mut traj = Trajectory::default();
    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let step = match controller.control(t, &x) {
            Ok(step) => step,
            Err(error) => {
                return Ok(SimOutcome {
                    trajectory: traj,
                    failure: Some(SimFailure { t, error }),
                })
            }
        };
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.inputs.push(step.u.clone());
        traj.nominal_inputs.push(step.u_nom.clone());
        if let Some(diag) = &step.diagnostics {
            traj.psi_values.push(diag.psi.clone());
            traj.barrier_b.push(diag.b);
            traj.mu.push(diag.mu);
        }
        if k == steps {
            break;
        }

        x = match advance(&x, &step.u, t) {
            Ok(next) => next,
            Err(error) => {
                return Ok(SimOutcome {
                    trajectory: traj,
                    failure: Some(SimFailure { t, error }),
                })
            }
        };
    }
    Ok(SimOutcome {
        trajectory: traj,
        failure: None,
    })
}

/// Which logged series an event query runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryField {
    /// Raw constraint value b(x(t)).
    BarrierB,
    /// Margin psi_k(t).
    Psi(usize),
    /// Filter multiplier.
    Mu,
    /// |u(t) - u_nom(t)|.
    Discrepancy,
}

fn field_series(traj: &Trajectory, field: TrajectoryField) -> Result<Vec<f64>> {
    let n = traj.len();
    match field {
        TrajectoryField::BarrierB => {
            if traj.barrier_b.len() != n {
                return Err(Error::UnknownField("barrier_b (not logged)".into()));
            }
            Ok(traj.barrier_b.clone())
        }
        TrajectoryField::Mu => {
            if traj.mu.len() != n {
                return Err(Error::UnknownField("mu (not logged)".into()));
            }
            Ok(traj.mu.clone())
        }
        TrajectoryField::Psi(k) => {
            if traj.psi_values.len() != n || traj.psi_values.iter().any(|psi| psi.len() <= k) {
                return Err(Error::UnknownField(format!("psi_{k} (not logged)")));
            }
            Ok(traj.psi_values.iter().map(|psi| psi[k]).collect())
        }
        TrajectoryField::Discrepancy => Ok(traj
            .inputs
            .iter()
            .zip(&traj.nominal_inputs)
            .map(|(u, u_nom)| (u - u_nom).norm())
            .collect()),
    }
}

fn sublevel_intervals(times: &[f64], series: &[f64], level: f64) -> Vec<(f64, f64)> {
    let interp = |i: usize| -> f64 {
        let (t0, t1) = (times[i - 1], times[i]);
        let (f0, f1) = (series[i - 1], series[i]);
        t0 + (level - f0) / (f1 - f0) * (t1 - t0)
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    for i in 0..series.len() {
        let below = series[i] < level;
        match (below, start) {
            (true, None) => {
                start = Some(if i == 0 { times[0] } else { interp(i) });
            }
            (false, Some(t_enter)) => {
                out.push((t_enter, interp(i)));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(t_enter) = start {
        out.push((t_enter, *times.last().unwrap()));
    }
    out
}

/// Maximal intervals where the selected field is strictly below `level`,
/// endpoints located by linear interpolation between adjacent samples.
pub fn detect_threshold_crossings(
    traj: &Trajectory,
    field: TrajectoryField,
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    traj.validate()?;
    let series = field_series(traj, field)?;
    Ok(sublevel_intervals(&traj.times, &series, level))
}

/// Maximal intervals where the selected field is strictly above `level`.
pub fn detect_threshold_excursions(
    traj: &Trajectory,
    field: TrajectoryField,
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    traj.validate()?;
    let series: Vec<f64> = field_series(traj, field)?.iter().map(|v| -v).collect();
    Ok(sublevel_intervals(&traj.times, &series, -level))
}

/// Forward-invariance verdict over the logged psi margins.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    /// All margins started nonnegative (the theorem hypothesis). When false,
    /// no invariance claim is made and `invariant` is false.
    pub hypothesis_met: bool,
    /// hypothesis_met and every psi_k stayed >= -tol over the run.
    pub invariant: bool,
    /// Per-margin minimum over time.
    pub min_margins: DVector<f64>,
}

pub fn forward_invariance_report(traj: &Trajectory, tol: f64) -> Result<InvarianceReport> {
    traj.validate()?;
    if traj.psi_values.len() != traj.len() {
        return Err(Error::PreconditionViolated(
            "forward_invariance_report needs logged psi values".into(),
        ));
    }
    let r = traj.psi_values[0].len();
    let mut min_margins = DVector::from_element(r, f64::INFINITY);
    for psi in &traj.psi_values {
        for k in 0..r {
            min_margins[k] = min_margins[k].min(psi[k]);
        }
    }
    let hypothesis_met = traj.psi_values[0].iter().all(|&v| v >= 0.0);
    let invariant = hypothesis_met && min_margins.iter().all(|&v| v >= -tol);
    Ok(InvarianceReport {
        hypothesis_met,
        invariant,
        min_margins,
    })
}
