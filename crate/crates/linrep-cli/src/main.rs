//! Command-line front end for the experiment driver.
//!
//! Exit status: 0 on success, 1 on i/o failure, 2 on config/usage error,
//! 3 on numerical failure (which still leaves a meta.json record behind).

use clap::{Parser, Subcommand};
use linrep_cli::compare::{compare_runs, CompareError};
use linrep_cli::config::ExperimentConfig;
use linrep_cli::runner::{run_experiment, RunError};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "linrep",
    about = "Runs linear-representation solvers on nonlinear models and compares the results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment described by a JSON config file.
    Run {
        /// Path to the experiment config (JSON).
        config: PathBuf,
    },
    /// Compare finished runs against a reference run.
    Compare {
        /// Run directories to compare.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Reference run directory (must contain trajectory.csv).
        #[arg(long)]
        reference: PathBuf,
        /// Deviation threshold defining the divergence horizon.
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        /// Also write the comparison as CSV to this path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => run_command(&config),
        Command::Compare {
            dirs,
            reference,
            threshold,
            output,
        } => compare_command(&dirs, &reference, threshold, output.as_deref()),
    }
}

fn run_command(config_path: &std::path::Path) -> ExitCode {
    let text = match fs::read_to_string(config_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    let config = match ExperimentConfig::from_json(&text) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run_experiment(&config) {
        Ok(output) => {
            println!(
                "ok: {} -> {}",
                config.method.name(),
                output.directory.display()
            );
            ExitCode::SUCCESS
        }
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(RunError::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_IO)
        }
        Err(RunError::Numerical(e)) => {
            eprintln!("error: numerical failure: {e}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}

fn compare_command(
    dirs: &[PathBuf],
    reference: &std::path::Path,
    threshold: f64,
    output: Option<&std::path::Path>,
) -> ExitCode {
    let report = match compare_runs(dirs, reference, threshold) {
        Ok(report) => report,
        Err(CompareError::Io(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_IO);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    print!("{}", report.table());
    if let Some(path) = output {
        let mut buffer = Vec::new();
        report.write_csv(&mut buffer).expect("vec write");
        if let Err(e) = fs::write(path, buffer) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(EXIT_IO);
        }
    }
    ExitCode::SUCCESS
}
