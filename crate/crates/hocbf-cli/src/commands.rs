//! Subcommand implementations. Each returns `Ok(())` for exit 0 or a
//! [`CliError`] that main maps to the documented exit code (1 config,
//! 2 diverged/failed checks, 3 io). Artifacts of a diverged run are still
//! written: the logged prefix is the evidence of where and how it stopped.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hocbf::sim::{FilterMode, SimOutcome, Trajectory};
use serde::Serialize;

use crate::artifacts::{
    build_events, emit_events_csv, emit_psi_csv, emit_trajectory_csv, run_checks, write_json,
    ArtifactPaths, FailureNote, RunChecks, RunManifest, CHECK_TOL,
};
use crate::config::{load_config, RunConfig};
use crate::error::CliError;
use crate::scenario::{filter_mode, BuiltScenario};

/// Environment variable holding the default output root (default `out/`).
pub const OUT_ROOT_ENV: &str = "HOCBF_OUT_ROOT";

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn config_stem(config_path: &Path) -> String {
    config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string())
}

fn resolve_out_dir(explicit: Option<PathBuf>, config_path: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| out_root().join(config_stem(config_path)))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn format_intervals(intervals: &[(f64, f64)]) -> String {
    if intervals.is_empty() {
        return "none".to_string();
    }
    intervals
        .iter()
        .map(|(a, b)| format!("[{a:.3}, {b:.3}]"))
        .collect::<Vec<_>>()
        .join(" u ")
}

struct WrittenRun {
    artifacts: ArtifactPaths,
    checks: Option<RunChecks>,
    failure: Option<FailureNote>,
}

/// Writes trajectory.csv, psi.csv and events.csv for one outcome.
fn write_run_artifacts(
    outcome: &SimOutcome,
    xi: f64,
    dir: &Path,
) -> Result<WrittenRun, CliError> {
    create_dir(dir)?;
    let traj = &outcome.trajectory;
    let trajectory_csv = dir.join("trajectory.csv");
    emit_trajectory_csv(traj, &trajectory_csv)?;
    let psi_csv = if traj.has_diagnostics() && !traj.is_empty() {
        let path = dir.join("psi.csv");
        emit_psi_csv(traj, &path)?;
        Some(path)
    } else {
        None
    };
    let events = build_events(traj, xi, outcome.failure.as_ref())?;
    let events_csv = dir.join("events.csv");
    emit_events_csv(&events, &events_csv)?;
    Ok(WrittenRun {
        artifacts: ArtifactPaths {
            trajectory_csv: trajectory_csv.display().to_string(),
            psi_csv: psi_csv.map(|p| p.display().to_string()),
            events_csv: events_csv.display().to_string(),
        },
        checks: run_checks(traj, CHECK_TOL),
        failure: outcome.failure.as_ref().map(|f| FailureNote {
            t: f.t,
            error: f.error.to_string(),
        }),
    })
}

fn describe_run(label: &str, config: &RunConfig, written: &WrittenRun, quiet: bool) {
    if quiet {
        return;
    }
    match &written.failure {
        None => println!(
            "{label}: completed {} s at dt = {}",
            config.simulation.t_final, config.simulation.dt
        ),
        Some(failure) => println!(
            "{label}: stopped at t = {:.3} s of {} s ({})",
            failure.t, config.simulation.t_final, failure.error
        ),
    }
    if let Some(checks) = &written.checks {
        println!(
            "{label}: invariant = {} (min margin {:.3e}), min b = {:.3e}, max input jump = {:.3e}",
            checks.forward_invariant.passed,
            checks.forward_invariant.value,
            checks.barrier_floor.value,
            checks.max_input_jump
        );
        println!(
            "{label}: discrepancy intervals: {}",
            format_intervals(&checks.discrepancy_intervals)
        );
    }
}

fn simulate_inner(
    config_path: &Path,
    out: Option<PathBuf>,
    quiet: bool,
) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let out_dir = resolve_out_dir(out, config_path);
    let built = BuiltScenario::build(&config)?;
    let mode = filter_mode(&config);

    let start = Instant::now();
    let outcome = built.run(&config, mode)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let written = write_run_artifacts(&outcome, built.xi(), &out_dir)?;
    let manifest = RunManifest {
        command: "simulate".to_string(),
        config_path: config_path.display().to_string(),
        config: config.clone(),
        out_dir: out_dir.display().to_string(),
        artifacts: written.artifacts.clone(),
        completed: outcome.completed(),
        failure: written.failure.clone(),
        wall_seconds,
        checks: written.checks.clone(),
    };
    write_json(&manifest, &out_dir.join("manifest.json"))?;

    let label = config.scenario.name.label().to_string();
    describe_run(&label, &config, &written, quiet);
    if !quiet {
        println!("{label}: artifacts in {}", out_dir.display());
    }
    match &written.failure {
        Some(failure) => Err(CliError::Diverged(format!(
            "stopped at t = {:.3} s: {}",
            failure.t, failure.error
        ))),
        None => Ok(()),
    }
}

/// `simulate <config> [--out dir]`: one closed-loop run plus artifacts.
pub fn simulate(config_path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    simulate_inner(config_path, out, false)
}

#[derive(Debug, Serialize)]
struct LegSummary {
    completed: bool,
    failure: Option<FailureNote>,
    checks: Option<RunChecks>,
}

#[derive(Debug, Serialize)]
struct MarginDiff {
    common_steps: usize,
    max_margin_gap: f64,
    max_barrier_gap: f64,
    max_input_gap: f64,
}

#[derive(Debug, Serialize)]
struct CompareReport {
    config_path: String,
    config: RunConfig,
    filtered_mode: String,
    filtered: LegSummary,
    unfiltered: LegSummary,
    margin_diff: MarginDiff,
}

fn leg_summary(outcome: &SimOutcome) -> LegSummary {
    LegSummary {
        completed: outcome.completed(),
        failure: outcome.failure.as_ref().map(|f| FailureNote {
            t: f.t,
            error: f.error.to_string(),
        }),
        checks: run_checks(&outcome.trajectory, CHECK_TOL),
    }
}

fn margin_diff(filtered: &Trajectory, unfiltered: &Trajectory) -> MarginDiff {
    let common = filtered.len().min(unfiltered.len());
    let mut max_margin_gap = 0.0_f64;
    let mut max_barrier_gap = 0.0_f64;
    let mut max_input_gap = 0.0_f64;
    for k in 0..common {
        if k < filtered.psi_values.len() && k < unfiltered.psi_values.len() {
            max_margin_gap =
                max_margin_gap.max((&filtered.psi_values[k] - &unfiltered.psi_values[k]).amax());
            max_barrier_gap =
                max_barrier_gap.max((filtered.barrier_b[k] - unfiltered.barrier_b[k]).abs());
        }
        max_input_gap = max_input_gap.max((&filtered.inputs[k] - &unfiltered.inputs[k]).amax());
    }
    MarginDiff {
        common_steps: common,
        max_margin_gap,
        max_barrier_gap,
        max_input_gap,
    }
}

/// `compare <config> [--out dir]`: runs the configured scenario with and
/// without the safety filter and diffs the margins over the common prefix.
pub fn compare(config_path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let out_dir = resolve_out_dir(out, config_path);
    let built = BuiltScenario::build(&config)?;
    // A compare of a config with `filter = "off"` still needs a filtered
    // leg; default it to the standard filter.
    let filtered_mode = match filter_mode(&config) {
        FilterMode::Off => FilterMode::Standard,
        mode => mode,
    };

    let filtered = built.run(&config, filtered_mode)?;
    let unfiltered = built.run(&config, FilterMode::Off)?;

    let filtered_written = write_run_artifacts(&filtered, built.xi(), &out_dir.join("filtered"))?;
    let unfiltered_written =
        write_run_artifacts(&unfiltered, built.xi(), &out_dir.join("unfiltered"))?;

    let report = CompareReport {
        config_path: config_path.display().to_string(),
        config: config.clone(),
        filtered_mode: match filtered_mode {
            FilterMode::Off => "off".to_string(),
            FilterMode::Standard => "standard".to_string(),
            FilterMode::Robustified { omega_bar } => format!("robustified(omega_bar={omega_bar})"),
        },
        filtered: leg_summary(&filtered),
        unfiltered: leg_summary(&unfiltered),
        margin_diff: margin_diff(&filtered.trajectory, &unfiltered.trajectory),
    };
    write_json(&report, &out_dir.join("compare.json"))?;

    let label = config.scenario.name.label().to_string();
    describe_run(&format!("{label} [filtered]"), &config, &filtered_written, false);
    describe_run(
        &format!("{label} [unfiltered]"),
        &config,
        &unfiltered_written,
        false,
    );
    println!(
        "{label}: margin diff over {} common steps: max |psi gap| = {:.3e}, max |b gap| = {:.3e}, \
         max |u gap| = {:.3e}",
        report.margin_diff.common_steps,
        report.margin_diff.max_margin_gap,
        report.margin_diff.max_barrier_gap,
        report.margin_diff.max_input_gap
    );
    println!("{label}: report in {}", out_dir.join("compare.json").display());

    let stopped: Vec<&str> = [
        (!filtered.completed()).then_some("filtered"),
        (!unfiltered.completed()).then_some("unfiltered"),
    ]
    .into_iter()
    .flatten()
    .collect();
    if stopped.is_empty() {
        Ok(())
    } else {
        Err(CliError::Diverged(format!(
            "{} leg(s) stopped before the horizon",
            stopped.join(" and ")
        )))
    }
}

#[derive(Debug, Serialize)]
struct VerifyManifest {
    command: String,
    config_path: String,
    config: RunConfig,
    summary: crate::scenario::VerificationSummary,
    wall_seconds: f64,
}

/// `verify <config> [--samples N] [--seed S] [--out dir]`: sampling-based
/// certificate sweeps over the scenario's operating region.
pub fn verify(
    config_path: &Path,
    samples: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    if samples == Some(0) {
        return Err(CliError::Config("--samples must be at least 1".to_string()));
    }
    let out_dir = resolve_out_dir(out, config_path);
    let built = BuiltScenario::build(&config)?;
    let samples = samples.or(config.verify.samples).unwrap_or(10_000);
    let seed = seed.or(config.verify.seed).unwrap_or(0x5EED);
    let attitude_margin = config.verify.attitude_margin.unwrap_or(0.15);
    let rate_bound = config.verify.rate_bound.unwrap_or(0.4);

    let start = Instant::now();
    let summary = built.run_verification(samples, seed, attitude_margin, rate_bound)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    for sweep in &summary.sweeps {
        println!(
            "verify {}: {}/{} ok{}",
            sweep.name,
            sweep.checked - sweep.violations,
            sweep.checked,
            if sweep.passed { "" } else { "  << VIOLATIONS" }
        );
    }
    let violations = summary.total_violations();

    create_dir(&out_dir)?;
    let manifest = VerifyManifest {
        command: "verify".to_string(),
        config_path: config_path.display().to_string(),
        config,
        summary,
        wall_seconds,
    };
    write_json(&manifest, &out_dir.join("verify.json"))?;
    println!("verify: report in {}", out_dir.join("verify.json").display());

    if violations == 0 {
        Ok(())
    } else {
        Err(CliError::Diverged(format!(
            "{violations} certificate violation(s) found"
        )))
    }
}

/// `batch <configs...> [--out root]`: runs each config's simulate in its own
/// thread with a per-run output directory `root/<config stem>`.
pub fn batch(configs: &[PathBuf], out: Option<PathBuf>) -> Result<(), CliError> {
    if configs.is_empty() {
        return Err(CliError::Config(
            "batch needs at least one config path".to_string(),
        ));
    }
    let root = out.unwrap_or_else(out_root);

    // Disambiguate duplicate stems so parallel runs never share a directory.
    let mut dirs = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    for path in configs {
        let stem = config_stem(path);
        let count = seen.iter().filter(|s| **s == stem).count();
        seen.push(stem.clone());
        let dir = if count == 0 {
            root.join(&stem)
        } else {
            root.join(format!("{stem}_{count}"))
        };
        dirs.push(dir);
    }

    let results: Vec<(String, Result<(), CliError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .zip(&dirs)
            .map(|(path, dir)| {
                scope.spawn(move || {
                    (
                        config_stem(path),
                        simulate_inner(path, Some(dir.clone()), true),
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("batch worker panicked"))
            .collect()
    });

    let mut worst: Option<CliError> = None;
    for ((stem, result), dir) in results.into_iter().zip(&dirs) {
        match result {
            Ok(()) => println!("batch {stem}: ok ({})", dir.display()),
            Err(e) => {
                println!("batch {stem}: {e} ({})", dir.display());
                let code = e.exit_code();
                if worst.as_ref().map_or(0, |w| w.exit_code()) < code {
                    worst = Some(e);
                }
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(e) => Err(e),
    }
}
