//! Command-line driver for the TMCC twin-beam key-distribution simulator.
//!
//! Exit codes: 0 success / session accepted, 1 internal error, 2 usage
//! error, 3 transport failure or abort, 4 verification abort,
//! 5 eavesdropping suspected.

mod commands;
mod config;
mod grid;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tmcc_core::transport::TransportError;

/// A domain or flag error that should exit with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "tmcc",
    version,
    about = "Simulator for quantum key distribution over two-mode coherently correlated twin beams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Photon-number probabilities of the TMCC beam and the mean-matched
    /// Poisson beam.
    Dist(commands::DistArgs),
    /// Mean photon number and variance curves over an amplitude grid.
    Moments(commands::MomentsArgs),
    /// Run one key-distribution session (loopback or TCP endpoint).
    Session(commands::SessionArgs),
    /// Analytic and Monte-Carlo error rates over a (lambda, epsilon) grid.
    Sweep(commands::SweepArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dist(args) => commands::cmd_dist(args),
        Command::Moments(args) => commands::cmd_moments(args),
        Command::Session(args) => commands::cmd_session(args),
        Command::Sweep(args) => commands::cmd_sweep(args),
    };
    match result {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            if error.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else if error.downcast_ref::<TransportError>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
