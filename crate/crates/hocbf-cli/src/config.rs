//! Run configuration: a flat key/value text file with one section per
//! concern ([scenario], [simulation], [verify]). Unknown keys are rejected
//! so that typos surface as config errors instead of silently applied
//! defaults. The full key reference lives in the repository README.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: ScenarioName,
    #[serde(default)]
    pub filter: FilterName,
    /// Attitude only: inject the scripted additive torque signal.
    pub additive_signal: Option<bool>,
    /// Robustified filter only: disturbance norm bound compensated by the
    /// constraint tightening.
    pub omega_bar: Option<f64>,
    /// Attitude only: feed a bounded input disturbance of this norm into the
    /// plant (independently of the filter mode).
    pub disturbance_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Attitude,
    DiskRegulation,
    DiskTraversal,
}

impl ScenarioName {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioName::Attitude => "attitude",
            ScenarioName::DiskRegulation => "disk_regulation",
            ScenarioName::DiskTraversal => "disk_traversal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterName {
    Off,
    #[default]
    Standard,
    Robustified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputHoldName {
    /// Re-evaluate the controller at integrator sub-stages.
    #[default]
    Substage,
    /// Hold the step-start input across the whole step.
    Zoh,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub t_final: f64,
    pub dt: f64,
    #[serde(default)]
    pub input_hold: InputHoldName,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    /// Attitude sampling boxes only: attitude distance to the cell centers.
    pub attitude_margin: Option<f64>,
    /// Attitude sampling boxes only: body-rate bound.
    pub rate_bound: Option<f64>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("parse error in {}: {e}", path.display())))?;
    config.validate().map_err(CliError::Config)?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let sim = &self.simulation;
        if !(sim.dt.is_finite() && sim.dt > 0.0) {
            return Err(format!(
                "simulation.dt must be positive and finite, got {}",
                sim.dt
            ));
        }
        if !(sim.t_final.is_finite() && sim.t_final >= sim.dt) {
            return Err(format!(
                "simulation.t_final must be finite and at least dt = {}, got {}",
                sim.dt, sim.t_final
            ));
        }
        let steps = sim.t_final / sim.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(format!(
                "simulation.t_final = {} must be an integer multiple of simulation.dt = {}",
                sim.t_final, sim.dt
            ));
        }

        let scen = &self.scenario;
        match scen.filter {
            FilterName::Robustified => {
                let omega_bar = scen.omega_bar.ok_or_else(|| {
                    "scenario.omega_bar is required when filter = \"robustified\"".to_string()
                })?;
                if !(omega_bar.is_finite() && omega_bar > 0.0) {
                    return Err(format!(
                        "scenario.omega_bar must be positive and finite, got {omega_bar}"
                    ));
                }
            }
            _ => {
                if scen.omega_bar.is_some() {
                    return Err(
                        "scenario.omega_bar is only meaningful with filter = \"robustified\""
                            .to_string(),
                    );
                }
            }
        }

        if scen.name != ScenarioName::Attitude {
            if scen.additive_signal.is_some() {
                return Err(format!(
                    "scenario.additive_signal only applies to the attitude scenario, not {}",
                    scen.name.label()
                ));
            }
            if scen.disturbance_bound.is_some() {
                return Err(format!(
                    "scenario.disturbance_bound only applies to the attitude scenario, not {}",
                    scen.name.label()
                ));
            }
            if self.verify.attitude_margin.is_some() || self.verify.rate_bound.is_some() {
                return Err(format!(
                    "verify.attitude_margin / verify.rate_bound only apply to the attitude \
                     scenario, not {}",
                    scen.name.label()
                ));
            }
        }
        if let Some(bound) = scen.disturbance_bound {
            if !(bound.is_finite() && bound >= 0.0) {
                return Err(format!(
                    "scenario.disturbance_bound must be nonnegative and finite, got {bound}"
                ));
            }
        }

        if self.verify.samples == Some(0) {
            return Err("verify.samples must be at least 1".to_string());
        }
        for (key, value) in [
            ("verify.attitude_margin", self.verify.attitude_margin),
            ("verify.rate_bound", self.verify.rate_bound),
        ] {
            if let Some(value) = value {
                if !(value.is_finite() && value > 0.0) {
                    return Err(format!("{key} must be positive and finite, got {value}"));
                }
            }
        }
        Ok(())
    }
}
