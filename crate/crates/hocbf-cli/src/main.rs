use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use hocbf_cli::commands;

/// Config-driven runner for the hocbf toolkit.
///
/// Exit codes: 0 success, 1 config error, 2 run stopped early or checks
/// found violations, 3 artifact I/O failure.
#[derive(Parser)]
#[command(name = "hocbf-cli", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop scenario and write trajectory/margin/event
    /// artifacts plus a manifest.
    Simulate {
        /// Scenario config file.
        config: PathBuf,
        /// Output directory (default: $HOCBF_OUT_ROOT/<config stem>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampling-based certificate checks over the scenario's region.
    Verify {
        /// Scenario config file.
        config: PathBuf,
        /// Sample count (overrides the config's verify.samples).
        #[arg(long)]
        samples: Option<usize>,
        /// RNG seed (overrides the config's verify.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for verify.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario with and without the filter and diff the margins.
    Compare {
        /// Scenario config file.
        config: PathBuf,
        /// Output directory for both runs and compare.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configs in parallel, one output directory per run.
    Batch {
        /// Scenario config files.
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Output root; each run writes to <root>/<config stem>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Simulate { config, out } => commands::simulate(&config, out),
        Command::Verify {
            config,
            samples,
            seed,
            out,
        } => commands::verify(&config, samples, seed, out),
        Command::Compare { config, out } => commands::compare(&config, out),
        Command::Batch { configs, out } => commands::batch(&configs, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
