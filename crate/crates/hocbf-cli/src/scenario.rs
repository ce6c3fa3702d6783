//! Bridges a parsed [`RunConfig`] to the library scenarios: builds the
//! closed-loop pieces, runs the integrator, and executes the sampling-based
//! certificate sweeps.

use hocbf::scenarios::{
    attitude_scenario, bounded_disturbance, disk_regulation_scenario, disk_traversal_scenario,
    raw_input_row, AttitudeScenario, DiskScenario,
};
use hocbf::sim::{integrate_closed_loop_partial, FilterMode, InputHold, SimOptions, SimOutcome};
use hocbf::systems::attitude::attitude_analytic_provider;
use hocbf::verify::{
    check_containment, check_hocbf_condition, check_least_relative_degree, CertificateReport,
    SamplingBox, SINGULAR_ROW_NORM,
};
use hocbf::ConstraintProvider;
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{FilterName, RunConfig, ScenarioName};
use crate::error::CliError;

/// A config-selected scenario with the config-resolved knobs applied.
pub enum BuiltScenario {
    Attitude {
        scenario: AttitudeScenario,
        additive: bool,
    },
    Disk {
        scenario: DiskScenario,
    },
}

fn lib_config(e: hocbf::Error) -> CliError {
    CliError::Config(e.to_string())
}

pub fn filter_mode(config: &RunConfig) -> FilterMode {
    match config.scenario.filter {
        FilterName::Off => FilterMode::Off,
        FilterName::Standard => FilterMode::Standard,
        FilterName::Robustified => FilterMode::Robustified {
            // Presence is enforced by config validation.
            omega_bar: config.scenario.omega_bar.unwrap_or(0.0),
        },
    }
}

impl BuiltScenario {
    pub fn build(config: &RunConfig) -> Result<Self, CliError> {
        match config.scenario.name {
            ScenarioName::Attitude => Ok(BuiltScenario::Attitude {
                scenario: attitude_scenario().map_err(lib_config)?,
                additive: config.scenario.additive_signal.unwrap_or(true),
            }),
            ScenarioName::DiskRegulation => Ok(BuiltScenario::Disk {
                scenario: disk_regulation_scenario().map_err(lib_config)?,
            }),
            ScenarioName::DiskTraversal => Ok(BuiltScenario::Disk {
                scenario: disk_traversal_scenario().map_err(lib_config)?,
            }),
        }
    }

    /// Truncation level of the scenario's barrier.
    pub fn xi(&self) -> f64 {
        match self {
            BuiltScenario::Attitude { scenario, .. } => scenario.params.xi(),
            BuiltScenario::Disk { scenario } => scenario.xi,
        }
    }

    fn options(&self, config: &RunConfig) -> SimOptions {
        let input_hold = match config.simulation.input_hold {
            crate::config::InputHoldName::Substage => InputHold::SubStage,
            crate::config::InputHoldName::Zoh => InputHold::ZeroOrderHold,
        };
        let disturbance = match config.scenario.disturbance_bound {
            Some(bound) if bound > 0.0 => Some(bounded_disturbance(bound)),
            _ => None,
        };
        SimOptions {
            input_hold,
            disturbance,
        }
    }

    /// Integrates the closed loop under `mode`, tolerating mid-run stops.
    pub fn run(&self, config: &RunConfig, mode: FilterMode) -> Result<SimOutcome, CliError> {
        let options = self.options(config);
        let (t_final, dt) = (config.simulation.t_final, config.simulation.dt);
        let outcome = match self {
            BuiltScenario::Attitude { scenario, additive } => {
                let controller = scenario.controller(mode, *additive).map_err(lib_config)?;
                integrate_closed_loop_partial(
                    &scenario.model(),
                    &controller,
                    &scenario.x0,
                    t_final,
                    dt,
                    &options,
                )
            }
            BuiltScenario::Disk { scenario } => {
                let controller = scenario.controller(mode).map_err(lib_config)?;
                integrate_closed_loop_partial(
                    &scenario.model,
                    &controller,
                    &scenario.x0,
                    t_final,
                    dt,
                    &options,
                )
            }
        }
        .map_err(lib_config)?;
        Ok(outcome)
    }
}

#[derive(Debug, Serialize)]
pub struct SweepEntry {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct VerificationSummary {
    pub samples: usize,
    pub seed: u64,
    pub sweeps: Vec<SweepEntry>,
    pub passed: bool,
}

impl VerificationSummary {
    fn new(samples: usize, seed: u64) -> Self {
        VerificationSummary {
            samples,
            seed,
            sweeps: Vec::new(),
            passed: true,
        }
    }

    fn push(&mut self, name: impl Into<String>, report: &CertificateReport) {
        let entry = SweepEntry {
            name: name.into(),
            checked: report.checked,
            violations: report.violations.len(),
            passed: report.passed(),
        };
        self.passed &= entry.passed;
        self.sweeps.push(entry);
    }

    pub fn total_violations(&self) -> usize {
        self.sweeps.iter().map(|s| s.violations).sum()
    }
}

impl BuiltScenario {
    /// Sampling sweeps over the scenario's operating region: the barrier
    /// inequality with the optimal input, the least-relative-degree check of
    /// the raw constraint, and containment of the input-singular set in the
    /// truncation plateau.
    pub fn run_verification(
        &self,
        samples: usize,
        seed: u64,
        attitude_margin: f64,
        rate_bound: f64,
    ) -> Result<VerificationSummary, CliError> {
        let mut summary = VerificationSummary::new(samples, seed);
        match self {
            BuiltScenario::Disk { scenario } => {
                let region = scenario.full_box(samples, seed).map_err(lib_config)?;
                let chain = scenario.chain().map_err(lib_config)?;
                let condition = check_hocbf_condition(&chain, &region).map_err(lib_config)?;
                summary.push("hocbf_condition", &condition);
                let degree =
                    check_least_relative_degree(&scenario.constraint, &scenario.model, &region)
                        .map_err(lib_config)?;
                summary.push("least_relative_degree", &degree);

                let sheet = scenario
                    .singular_sheet_box(samples, seed ^ 0x5EED)
                    .map_err(lib_config)?;
                let constraint = scenario.constraint.clone();
                let inner = {
                    let constraint = constraint.clone();
                    move |x: &DVector<f64>| {
                        Ok(SINGULAR_ROW_NORM - raw_input_row(&constraint, x)?.norm())
                    }
                };
                let outer = move |x: &DVector<f64>| constraint.eval_b(x);
                let containment =
                    check_containment(inner, outer, scenario.xi, &sheet).map_err(lib_config)?;
                summary.push("singular_containment", &containment);
            }
            BuiltScenario::Attitude { scenario, .. } => {
                let provider = attitude_analytic_provider(&scenario.params);
                let chain = scenario.analytic_chain().map_err(lib_config)?;
                let model = scenario.model();
                let per_cell = samples.div_ceil(scenario.params.cell_centers().len().max(1));
                let boxes = scenario
                    .cell_boxes(per_cell, seed, attitude_margin, rate_bound)
                    .map_err(lib_config)?;
                for (index, sampling_box) in boxes.iter().enumerate() {
                    let condition =
                        check_hocbf_condition(&chain, sampling_box).map_err(lib_config)?;
                    summary.push(format!("hocbf_condition(cell_{index})"), &condition);
                    let degree = check_least_relative_degree(&provider, &model, sampling_box)
                        .map_err(lib_config)?;
                    summary.push(format!("least_relative_degree(cell_{index})"), &degree);
                }

                for (index, state) in scenario
                    .singular_states()
                    .map_err(lib_config)?
                    .iter()
                    .enumerate()
                {
                    let region =
                        SamplingBox::degenerate(state.clone(), 1).map_err(lib_config)?;
                    let inner = |x: &DVector<f64>| {
                        Ok(SINGULAR_ROW_NORM - raw_input_row(&provider, x)?.norm())
                    };
                    let outer = |x: &DVector<f64>| provider.eval_b(x);
                    let containment =
                        check_containment(inner, outer, scenario.params.xi(), &region)
                            .map_err(lib_config)?;
                    summary.push(format!("singular_containment(state_{index})"), &containment);
                }
            }
        }
        Ok(summary)
    }
}
