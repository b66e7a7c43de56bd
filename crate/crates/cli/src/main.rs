//! Command-line front end: train reference classifiers, compress their
//! weights through a VAE and report the results as CSV.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "vaepack", version, about = "Compress neural-network weights with a variational autoencoder")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train base classifiers on MNIST and save their weights
    TrainBase,
    /// Write noisy training/validation variants of the base weights
    GenData,
    /// Train a VAE on the chunked variants
    TrainVae,
    /// Encode base weights into a latent archive
    Compress,
    /// Decode a latent archive back into weights
    Decompress,
    /// Test accuracy of original and reconstructed weights, per class
    Evaluate,
    /// Variants, VAE, compression, reconstruction and evaluation in one go
    Pipeline,
    /// Repeat the pipeline for several latent sizes
    Sweep {
        /// Comma-separated latent sizes, e.g. 128,64
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        sizes: Vec<usize>,
    },
    /// Collect VAE loss curves of a run into one long-format CSV
    Curves {
        /// Run directory [default: the --out directory]
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::TrainBase => commands::train_base_cmd(&cfg),
        Command::GenData => commands::gen_data_cmd(&cfg),
        Command::TrainVae => commands::train_vae_cmd(&cfg),
        Command::Compress => commands::compress_cmd(&cfg),
        Command::Decompress => commands::decompress_cmd(&cfg),
        Command::Evaluate => commands::evaluate_cmd(&cfg),
        Command::Pipeline => commands::pipeline_cmd(&cfg),
        Command::Sweep { sizes } => commands::sweep_cmd(&cfg, &sizes),
        Command::Curves { run } => commands::curves_cmd(&cfg, run.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
