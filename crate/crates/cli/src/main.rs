use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use laekit_cli::commands::{self, EvalArgs, FitArgs, IngestArgs, SplitArgs};
use laekit_cli::config::ExperimentConfig;
use laekit_cli::runner::run_experiment;
use laekit_cli::spectral_cmd::{export_spectral, SpectralArgs};

/// Closed-form linear autoencoder recommenders: LAE, EASE, DLAE, EDLAE,
/// and their relaxed-diagonal variants RLAE and RDLAE.
#[derive(Parser)]
#[command(name = "laekit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Config overrides, e.g. `--set seed=3 --set lambda_grid=[1,10]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw interaction file and report dataset statistics.
    Ingest(IngestArgs),
    /// Produce a strong or weak generalization split.
    Split(SplitArgs),
    /// Fit one model configuration and save the weight matrix.
    Fit(FitArgs),
    /// Evaluate saved weights against a saved split.
    Eval(EvalArgs),
    /// Run a hyperparameter grid end to end and write a report.
    Grid(GridArgs),
    /// Export eigenvalue scaling curves and PC-group heatmaps.
    Spectral(SpectralArgs),
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest(args) => commands::ingest(&args),
        Command::Split(args) => commands::split(&args),
        Command::Fit(args) => commands::fit(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Grid(args) => {
            let config = ExperimentConfig::from_file(&args.config, &args.overrides)?;
            run_experiment(&config)?;
            Ok(())
        }
        Command::Spectral(args) => export_spectral(&args),
    }
}
