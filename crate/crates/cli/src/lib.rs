//! The `vae-lab` command-line tool: training, latent diagnostics, sample
//! grids and KL analysis, writing models, CSV reports and PGM images with a
//! JSON manifest next to each primary output.

pub mod commands;
pub mod error;
pub mod format;
pub mod manifest;
pub mod pgm;
pub mod source;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "vae-lab", version, about = "Latent sparsity experiments with dense VAEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its per-minibatch log.
    Train(commands::TrainArgs),
    /// Per-variable activity statistics of a trained model.
    Stats(commands::StatsArgs),
    /// Decode prior samples into a PGM grid.
    Generate(commands::GenerateArgs),
    /// KL divergence curves under a fixed variance/mean² ratio.
    AnalyzeKl(commands::AnalyzeKlArgs),
    /// Progressive noise injection on one active latent variable.
    ExperimentNoise(commands::NoiseArgs),
    /// Dump encoder means and variances per example.
    Encode(commands::EncodeArgs),
}

/// Parses `args` and runs the selected command. Returns the process exit
/// code; diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::EXIT_USAGE } else { error::EXIT_OK };
        }
    };
    vae_lab::parallel::init_from_env();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Stats(a) => commands::stats(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::AnalyzeKl(a) => commands::analyze_kl(&a),
        Command::ExperimentNoise(a) => commands::experiment_noise(&a),
        Command::Encode(a) => commands::encode(&a),
    };
    match result {
        Ok(()) => error::EXIT_OK,
        Err(e) => {
            eprintln!("vae-lab: {e}");
            e.exit_code()
        }
    }
}
