//! `cmdiad`: preprocessing, distillation, memory banks, inference and
//! evaluation over an MVTec 3D-AD style dataset tree.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use config::CommonArgs;

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] cmdiad_core::Error),
    /// Some units of work failed, the rest completed.
    #[error("{failed} of {total} {unit} failed")]
    Partial { failed: usize, total: usize, unit: &'static str },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use cmdiad_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Partial { .. } => EXIT_PARTIAL,
            CliError::Core(E::Usage(_) | E::Config(_)) => EXIT_USAGE,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cmdiad", version, about = "Cross-modal memory-bank anomaly detection")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Remove the background plane from every sample and write a cleaned tree.
    Preprocess {
        #[command(flatten)]
        common: CommonArgs,
        /// Root of the cleaned dataset tree (must differ from the input root).
        #[arg(long)]
        into: PathBuf,
    },
    /// Train the distillation network and keep every checkpoint.
    Distill {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Build the memory banks the mode needs.
    Bank {
        #[command(flatten)]
        common: CommonArgs,
        /// Only this modality.
        #[arg(long)]
        modality: Option<cmdiad_core::data::Modality>,
    },
    /// Fit fusion and score the test split.
    Infer {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint directory to use instead of the last one under the output.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compute metrics from the scores written by `infer`.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score every checkpoint and select the one with the best image AUROC.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Repeat bank, scoring and evaluation for the L1, L2 and cosine metrics.
    AblateMetric {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write a synthetic dataset tree.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Raw point clouds and images instead of feature maps.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        coupling: Option<f64>,
        #[arg(long)]
        strength: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Preprocess { common, into } => commands::preprocess(&common, &into, &argv),
        Command::Distill { common } => commands::distill(&common, &argv),
        Command::Bank { common, modality } => commands::bank(&common, modality, &argv),
        Command::Infer { common, checkpoint } => commands::infer(&common, checkpoint.as_deref(), &argv),
        Command::Eval { common } => commands::eval(&common, &argv),
        Command::Sweep { common } => commands::sweep(&common, &argv),
        Command::AblateMetric { common } => commands::ablate_metric(&common, &argv),
        Command::Synth {
            common,
            raw,
            coupling,
            strength,
        } => commands::synth(&common, raw, coupling, strength, &argv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
