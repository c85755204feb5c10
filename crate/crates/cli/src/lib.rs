//! `matchbias` — pipeline driver around the estimation library.
//!
//! Subcommands mirror the experiment lifecycle:
//!
//! 1. `simulate` — draw a synthetic world (annotations, correctness, truth)
//! 2. `match`    — select a replication set by histogram matching
//! 3. `estimate` — run all estimators blind, write `report.json`
//! 4. `verify`   — score the report against ground truth
//! 5. `series`   — export plot-ready CSVs
//! 6. `em-fit` / `spline-fit` — run the parametric stages standalone
//!
//! Configuration is layered: built-in defaults, then a `key = value` file
//! (`--config`), then `MATCHBIAS_*` environment variables, then flags.
//! Reports embed a hash of the fully resolved configuration. All commands
//! exit 0 on success, 1 on usage/config problems, 2 on data problems, 3 on
//! numerical failures.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod schema;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::SeriesKind;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "matchbias",
    version,
    about = "Simulate, detect, and correct statistic-matching bias in dataset replications"
)]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for inputs and outputs (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Override the run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Override the simulated annotator count.
    #[arg(long, global = true)]
    pub annotators: Option<u32>,

    /// Override the number of EM mixture components.
    #[arg(long, global = true)]
    pub components: Option<usize>,

    /// Override the bootstrap resample count.
    #[arg(long, global = true)]
    pub resamples: Option<u32>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic annotations, correctness verdicts and ground truth.
    Simulate,
    /// Select candidate items matching the v1 observed-frequency histogram.
    Match,
    /// Run every estimator and write the JSON report (never reads truth).
    Estimate {
        /// Annotation table to use instead of the configured one.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Correctness table to use instead of the configured one.
        #[arg(long)]
        correctness: Option<PathBuf>,
        /// Rejected: estimation is blind by contract.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compare a report's estimates against ground truth.
    Verify,
    /// Export one diagnostic view as long-format CSV.
    Series {
        #[arg(long, value_enum)]
        which: SeriesKind,
    },
    /// Fit the latent beta mixture of one dataset's counts.
    EmFit {
        /// Dataset to fit: v1, v2 or candidate.
        #[arg(long, default_value = "candidate")]
        dataset: String,
    },
    /// Recover the accuracy curve by spline deconvolution.
    SplineFit,
}

/// Parse and run; returns the process exit code instead of exiting, so
/// tests can drive the full surface in-process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version arrive here too; they are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file_text = match &cli.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| CliError::Config {
            key: "config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?),
        None => None,
    };

    let mut flags: Vec<(&str, String)> = Vec::new();
    if let Some(seed) = cli.seed {
        flags.push(("seed", seed.to_string()));
    }
    if let Some(annotators) = cli.annotators {
        flags.push(("annotators", annotators.to_string()));
    }
    if let Some(components) = cli.components {
        flags.push(("em_components", components.to_string()));
    }
    if let Some(resamples) = cli.resamples {
        flags.push(("resamples", resamples.to_string()));
    }

    let cfg = config::resolve_layers(file_text.as_deref(), &config::env_layer(), &flags)?;

    std::fs::create_dir_all(&cli.out).map_err(CliError::io(&cli.out))?;
    let out = cli.out.as_path();

    match &cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg, out),
        Command::Match => commands::cmd_match(&cfg, out),
        Command::Estimate {
            annotations,
            correctness,
            truth,
        } => {
            if truth.is_some() {
                return Err(CliError::Usage(
                    "estimation is blind: `estimate` does not accept --truth".into(),
                ));
            }
            commands::cmd_estimate(&cfg, out, annotations.as_deref(), correctness.as_deref())
        }
        Command::Verify => commands::cmd_verify(&cfg, out),
        Command::Series { which } => commands::cmd_series(&cfg, out, *which),
        Command::EmFit { dataset } => commands::cmd_em_fit(&cfg, out, dataset),
        Command::SplineFit => commands::cmd_spline_fit(&cfg, out),
    }
}
