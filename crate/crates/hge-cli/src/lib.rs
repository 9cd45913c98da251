//! Command-line front end for `hge-core`: experiment configs, run records and
//! CSV/JSON export.
//!
//! Exit codes: 0 success, 1 rejected plan or failed run, 2 usage or parse
//! error.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::SweepKind;

#[derive(Debug, Parser)]
#[command(name = "hge", version, about = "Homodyne gradient extraction on simulated devices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Replace the plan section with a named preset.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Record wall-clock start and end in the run record.
    #[arg(long, global = true)]
    pub timestamps: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the perturbation plan; exit 1 on errors.
    ValidatePlan,
    /// Estimate the gradient at `extract.v_dc`.
    Extract,
    /// Compare HGE with a reference at random points.
    Compare {
        #[arg(long, value_enum)]
        kind: Option<SweepKind>,
    },
    /// Run one of the accuracy sweeps.
    Sweep {
        #[arg(long, value_enum)]
        kind: Option<SweepKind>,
    },
    /// Train the configured gate.
    Train,
}

/// Bad flags, unparsable config or inconsistent settings; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::ValidatePlan => commands::validate_plan_cmd(&cli.common),
        Command::Extract => commands::extract_cmd(&cli.common),
        Command::Compare { kind } => commands::sweep_cmd(&cli.common, *kind, true),
        Command::Sweep { kind } => commands::sweep_cmd(&cli.common, *kind, false),
        Command::Train => commands::train_cmd(&cli.common),
    }
}

/// 2 for usage errors; 1 for everything else, including [`config::PlanRejected`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else {
        1
    }
}
