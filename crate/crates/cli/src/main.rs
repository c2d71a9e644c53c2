//! `dtsnn`: train, evaluate and cost dynamic-timestep SNNs.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dtsnn::Error;

#[derive(Parser, Debug)]
#[command(name = "dtsnn", version, about = "Dynamic-timestep spiking neural networks on an IMC cost model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "runs/latest")]
    pub out: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write a checkpoint plus the per-epoch log.
    Train(Common),
    /// Compare the static run with dynamic exit at one threshold.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Overrides `exit.theta`.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Accuracy, exit-timestep distribution and cost over a threshold grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated thresholds; overrides `exit.theta_grid`.
        #[arg(long, value_delimiter = ',')]
        theta_grid: Option<Vec<f64>>,
    },
    /// Paired training runs with the standard and per-timestep losses.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds, one pair of runs each.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Energy breakdown per timestep count and optional device-variation study.
    Hwreport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Conductance variation sigma/mu; enables the variation table.
        #[arg(long)]
        sigma_mu: Option<f64>,
        /// Noise seeds for the variation table.
        #[arg(long, default_value_t = 5)]
        noise_seeds: u64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Argument(_) => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(c) => commands::train(&c),
        Command::Eval { common, checkpoint, theta } => commands::eval(&common, &checkpoint, theta),
        Command::Sweep {
            common,
            checkpoint,
            theta_grid,
        } => commands::sweep(&common, &checkpoint, theta_grid),
        Command::Ablate { common, seeds } => commands::ablate(&common, &seeds),
        Command::Hwreport {
            common,
            checkpoint,
            sigma_mu,
            noise_seeds,
        } => commands::hwreport(&common, &checkpoint, sigma_mu, noise_seeds),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
