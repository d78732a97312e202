//! `imptrack` command-line front end.

mod commands;
mod config;
mod emit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "imptrack",
    about = "Adaptive frequency identification and online internal-model tracking of sinusoids",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive identifier; write trajectory CSV and summary JSON
    Identify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the coupled online/ideal tracking loops
    Track {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep stimulus frequencies and write a Bode dataset
    Bode {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Experimental CSV (freq_hz,gain,phase_rad) to overlay
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the invariant/property suite
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Run only checks whose name contains this substring
        #[arg(long)]
        filter: Option<String>,
    },
    /// Fit per-frequency oscillator parameters to experimental data
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Experimental CSV (freq_hz,gain,phase_rad), required
        #[arg(long)]
        data: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let load = |path: &Option<PathBuf>| -> Result<RunConfig, CliError> {
        RunConfig::load(path.as_deref()).map_err(|e| CliError::config(e.to_string()))
    };
    match &cli.command {
        Command::Identify { config, out } => commands::cmd_identify(&load(config)?, out),
        Command::Track { config, out } => commands::cmd_track(&load(config)?, out),
        Command::Bode { config, out, data } => {
            commands::cmd_bode(&load(config)?, out, data.as_deref())
        }
        Command::Verify {
            config,
            out,
            filter,
        } => commands::cmd_verify(&load(config)?, out, filter.as_deref()),
        Command::Fit { config, out, data } => commands::cmd_fit(&load(config)?, out, data),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("imptrack: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
