//! Run artifacts: trajectory/margin/event CSV files and the JSON manifest.
//!
//! Numbers are written as decimal text with 17 significant digits, which is
//! enough for `f64` to round-trip bit-exactly: parsing an emitted file
//! recovers the in-memory trajectory verbatim, and the manifest invariant
//! (flags agree with rerunning the checks on the emitted CSV) reduces to
//! running the same check code on both sides.

use std::fs;
use std::path::Path;

use hocbf::sim::{
    detect_threshold_crossings, detect_threshold_excursions, forward_invariance_report,
    SimFailure, Trajectory, TrajectoryField,
};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Margin tolerance used by the run-level checks.
pub const CHECK_TOL: f64 = 1e-6;

/// 17 significant digits: the shortest fixed width that is lossless for f64.
pub fn g17(value: f64) -> String {
    format!("{value:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn all_finite(traj: &Trajectory) -> bool {
    let vectors = traj
        .states
        .iter()
        .chain(&traj.inputs)
        .chain(&traj.nominal_inputs)
        .chain(&traj.psi_values);
    traj.times.iter().all(|v| v.is_finite())
        && vectors.flat_map(|v| v.iter()).all(|v| v.is_finite())
        && traj.barrier_b.iter().all(|v| v.is_finite())
        && traj.mu.iter().all(|v| v.is_finite())
}

fn header_names(state_dim: usize, input_dim: usize, psi_dim: usize) -> Vec<String> {
    let mut names = vec!["t".to_string()];
    names.extend((0..state_dim).map(|i| format!("x{i}")));
    names.extend((0..input_dim).map(|i| format!("u{i}")));
    names.extend((0..input_dim).map(|i| format!("unom{i}")));
    if psi_dim > 0 {
        names.extend((0..psi_dim).map(|i| format!("psi{i}")));
        names.push("b".to_string());
        names.push("mu".to_string());
    }
    names
}

/// Writes the full per-step log: t, state, applied input, nominal input and,
/// when the controller carries a barrier, the psi margins, raw b and the
/// multiplier. Refuses trajectories containing non-finite values; an empty
/// trajectory produces a header-only file.
pub fn emit_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    if !all_finite(traj) {
        return Err(CliError::Diverged(
            "refusing to write a trajectory containing non-finite values".to_string(),
        ));
    }
    let mut out = String::new();
    if traj.is_empty() {
        out.push_str("t\n");
    } else {
        let state_dim = traj.states[0].len();
        let input_dim = traj.inputs[0].len();
        let psi_dim = if traj.has_diagnostics() {
            traj.psi_values[0].len()
        } else {
            0
        };
        out.push_str(&header_names(state_dim, input_dim, psi_dim).join(","));
        out.push('\n');
        for k in 0..traj.len() {
            let mut fields = vec![g17(traj.times[k])];
            fields.extend(traj.states[k].iter().map(|&v| g17(v)));
            fields.extend(traj.inputs[k].iter().map(|&v| g17(v)));
            fields.extend(traj.nominal_inputs[k].iter().map(|&v| g17(v)));
            if psi_dim > 0 {
                fields.extend(traj.psi_values[k].iter().map(|&v| g17(v)));
                fields.push(g17(traj.barrier_b[k]));
                fields.push(g17(traj.mu[k]));
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Slim margins file: t, psi components, raw b, multiplier.
pub fn emit_psi_csv(traj: &Trajectory, path: &Path) -> Result<(), CliError> {
    if !all_finite(traj) {
        return Err(CliError::Diverged(
            "refusing to write a trajectory containing non-finite values".to_string(),
        ));
    }
    let psi_dim = traj.psi_values.first().map_or(0, |psi| psi.len());
    let mut names = vec!["t".to_string()];
    names.extend((0..psi_dim).map(|i| format!("psi{i}")));
    names.push("b".to_string());
    names.push("mu".to_string());
    let mut out = names.join(",");
    out.push('\n');
    for k in 0..traj.len().min(traj.psi_values.len()) {
        let mut fields = vec![g17(traj.times[k])];
        fields.extend(traj.psi_values[k].iter().map(|&v| g17(v)));
        fields.push(g17(traj.barrier_b[k]));
        fields.push(g17(traj.mu[k]));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a file written by [`emit_trajectory_csv`] back into a trajectory,
/// recovering every value bit-exactly.
pub fn parse_trajectory_csv(path: &Path) -> Result<Trajectory, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Io(format!("{}: missing header", path.display())))?;
    let names: Vec<&str> = header.split(',').collect();
    let count_prefixed = |prefix: &str| {
        names
            .iter()
            .filter(|n| {
                n.strip_prefix(prefix)
                    .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
            })
            .count()
    };
    let state_dim = count_prefixed("x");
    let input_dim = count_prefixed("u");
    let psi_dim = count_prefixed("psi");
    let expected = if names == ["t"] {
        vec!["t".to_string()]
    } else {
        header_names(state_dim, input_dim, psi_dim)
    };
    if names != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(CliError::Io(format!(
            "{}: unrecognized trajectory header `{header}`",
            path.display()
        )));
    }

    let mut traj = Trajectory::default();
    for (row, line) in lines.enumerate() {
        let values = line
            .split(',')
            .map(str::parse::<f64>)
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| {
                CliError::Io(format!("{}: row {}: {e}", path.display(), row + 2))
            })?;
        if values.len() != expected.len() {
            return Err(CliError::Io(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                row + 2,
                values.len(),
                expected.len()
            )));
        }
        let mut cursor = values.into_iter();
        let mut take = |n: usize| -> DVector<f64> {
            DVector::from_iterator(n, cursor.by_ref().take(n))
        };
        traj.times.push(take(1)[0]);
        traj.states.push(take(state_dim));
        traj.inputs.push(take(input_dim));
        traj.nominal_inputs.push(take(input_dim));
        if psi_dim > 0 {
            traj.psi_values.push(take(psi_dim));
            traj.barrier_b.push(take(1)[0]);
            traj.mu.push(take(1)[0]);
        }
    }
    Ok(traj)
}

/// One row of events.csv.
#[derive(Debug, Clone, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: &'static str,
    pub detail: String,
}

/// Boundary and filter events extracted from the logs: intervals where the
/// raw barrier is negative, intervals inside the truncation plateau,
/// intervals of bitwise input discrepancy, and the stop event if the run
/// ended early.
pub fn build_events(
    traj: &Trajectory,
    xi: f64,
    failure: Option<&SimFailure>,
) -> Result<Vec<Event>, CliError> {
    let mut events = Vec::new();
    let internal = |e: hocbf::Error| CliError::Io(format!("event extraction: {e}"));
    if traj.has_diagnostics() && traj.len() >= 2 {
        for (start, end) in
            detect_threshold_crossings(traj, TrajectoryField::BarrierB, 0.0).map_err(internal)?
        {
            events.push(Event {
                t: start,
                kind: "barrier_negative_enter",
                detail: format!("b < 0 until t = {end:.6}"),
            });
            events.push(Event {
                t: end,
                kind: "barrier_negative_exit",
                detail: String::new(),
            });
        }
        for (start, end) in
            detect_threshold_excursions(traj, TrajectoryField::BarrierB, xi).map_err(internal)?
        {
            events.push(Event {
                t: start,
                kind: "plateau_enter",
                detail: format!("b > xi = {xi} until t = {end:.6}"),
            });
            events.push(Event {
                t: end,
                kind: "plateau_exit",
                detail: String::new(),
            });
        }
    }
    for (start, end) in discrepancy_intervals(traj) {
        events.push(Event {
            t: start,
            kind: "discrepancy_start",
            detail: format!("u != u_nom until t = {end:.6}"),
        });
        events.push(Event {
            t: end,
            kind: "discrepancy_end",
            detail: String::new(),
        });
    }
    if let Some(failure) = failure {
        events.push(Event {
            t: failure.t,
            kind: "stopped",
            detail: failure.error.to_string(),
        });
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(events)
}

pub fn emit_events_csv(events: &[Event], path: &Path) -> Result<(), CliError> {
    let mut out = String::from("t,kind,detail\n");
    for event in events {
        let quoted = format!("\"{}\"", event.detail.replace('"', "\"\""));
        out.push_str(&format!("{},{},{}\n", g17(event.t), event.kind, quoted));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Maximal intervals of bitwise input discrepancy over the logged grid.
pub fn discrepancy_intervals(traj: &Trajectory) -> Vec<(f64, f64)> {
    let mut intervals = Vec::new();
    let mut open: Option<f64> = None;
    for k in 0..traj.len() {
        let differs = traj.inputs[k] != traj.nominal_inputs[k];
        match (differs, open) {
            (true, None) => open = Some(traj.times[k]),
            (false, Some(start)) => {
                intervals.push((start, traj.times[k - 1]));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        intervals.push((start, *traj.times.last().unwrap()));
    }
    intervals
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

/// Run-level pass/fail summary recomputable from the emitted trajectory CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RunChecks {
    /// All margins nonnegative at the initial state (the invariance
    /// hypothesis; when false no invariance claim is made).
    pub hypothesis_met: bool,
    /// Hypothesis met and min over time of every psi margin >= -tolerance.
    pub forward_invariant: CheckEntry,
    /// Min over time of the raw barrier b >= -tolerance.
    pub barrier_floor: CheckEntry,
    /// Max over adjacent steps of the applied-input change (infinity norm).
    pub max_input_jump: f64,
    /// Maximal intervals of bitwise discrepancy between u and u_nom.
    pub discrepancy_intervals: Vec<(f64, f64)>,
}

/// Computes the run-level checks; `None` when the run logged no barrier
/// diagnostics or no samples at all.
pub fn run_checks(traj: &Trajectory, tol: f64) -> Option<RunChecks> {
    if traj.is_empty() || !traj.has_diagnostics() {
        return None;
    }
    let report = forward_invariance_report(traj, tol).ok()?;
    let min_margin = report.min_margins.min();
    let min_b = traj.barrier_b.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_input_jump = traj
        .inputs
        .windows(2)
        .map(|w| (&w[1] - &w[0]).amax())
        .fold(0.0, f64::max);
    Some(RunChecks {
        hypothesis_met: report.hypothesis_met,
        forward_invariant: CheckEntry {
            passed: report.invariant,
            value: min_margin,
            tolerance: tol,
        },
        barrier_floor: CheckEntry {
            passed: min_b >= -tol,
            value: min_b,
            tolerance: tol,
        },
        max_input_jump,
        discrepancy_intervals: discrepancy_intervals(traj),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureNote {
    pub t: f64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactPaths {
    pub trajectory_csv: String,
    pub psi_csv: Option<String>,
    pub events_csv: String,
}

/// Summary of one run: config echo, artifact paths, checks, timing.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config: RunConfig,
    pub out_dir: String,
    pub artifacts: ArtifactPaths,
    pub completed: bool,
    pub failure: Option<FailureNote>,
    pub wall_seconds: f64,
    pub checks: Option<RunChecks>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}
