//! `ionprobe`: simulate, fit and reconstruct cavity-photon Ramsey fringes.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ionprobe::model::Transition;

use crate::config::{BackendName, Overrides};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "ionprobe", version, about = "Probe intracavity photon statistics with a single ion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration (schema `ionprobe/v1`).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// RNG seed; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Master-equation backend; overrides the config.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendName>,
    /// Attach Monte-Carlo uncertainties to a reconstruction.
    #[arg(long, global = true)]
    bootstrap: bool,
    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransitionArg {
    #[value(name = "DP")]
    Dp,
    #[value(name = "DpPp")]
    DpPp,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a Ramsey fringe and write it as CSV.
    Simulate,
    /// Fit a sinusoid to a fringe CSV.
    Fit { fringe: PathBuf },
    /// Maximum-likelihood reconstruction of the photon statistics.
    Reconstruct { fringe: PathBuf },
    /// Reconstruction with Monte-Carlo uncertainties.
    Uncertainty { fringe: PathBuf },
    /// Photon-number calibration from detector counts and photodiode voltages.
    Calibrate,
    /// Phase shift and contrast against mean photon number.
    Sweep {
        /// Restrict the sweep to one transition.
        #[arg(long, value_enum)]
        transition: Option<TransitionArg>,
    },
    /// Smallest resolvable phase and photon-number change.
    PhaseResolution,
    /// Strong-pull figure of merit for several ion-cavity systems.
    StrongPull,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides { seed: cli.seed, backend: cli.backend };
    let cfg = config::load(cli.config.as_deref(), overrides)?;
    let out = cli.out.clone().or_else(|| cfg.file.out.clone().map(PathBuf::from));
    let out = out.as_deref();
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, out),
        Command::Fit { fringe } => commands::fit(&cfg, &fringe, out),
        Command::Reconstruct { fringe } => commands::reconstruct_cmd(&cfg, &fringe, cli.bootstrap, out),
        Command::Uncertainty { fringe } => commands::reconstruct_cmd(&cfg, &fringe, true, out),
        Command::Calibrate => commands::calibrate(&cfg, out),
        Command::Sweep { transition } => {
            let only = transition.map(|t| match t {
                TransitionArg::Dp => Transition::Dp,
                TransitionArg::DpPp => Transition::DpPp,
            });
            commands::sweep(&cfg, only, out)
        }
        Command::PhaseResolution => commands::phase_resolution_cmd(&cfg, out),
        Command::StrongPull => commands::strong_pull(&cfg, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
