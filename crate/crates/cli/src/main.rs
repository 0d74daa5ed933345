//! `circscatter`: dataset generation, training, evaluation, noise sweeps,
//! reconstruction curves, gradient checks and full experiment suites.
//!
//! Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 I/O.

mod commands;
mod config;

use std::process::ExitCode;

use circscatter::Error;
use clap::{Parser, Subcommand};

use commands::Failure;
use config::{RunArgs, RunConfig};

#[derive(Parser)]
#[command(
    name = "circscatter",
    version,
    about = "Inverse obstacle scattering with circular 1D CNNs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a suite's dataset.
    Generate(RunArgs),
    /// Train a preset or custom network on a dataset.
    Train(RunArgs),
    /// Score a trained model on a dataset.
    Evaluate(RunArgs),
    /// Score a trained model under additive noise.
    Sweep(RunArgs),
    /// Write max/min/random reconstruction curves for a regression model.
    Reconstruct(RunArgs),
    /// Finite-difference check of every layer's gradients.
    Gradcheck(RunArgs),
    /// Generate, train, evaluate and sweep one suite.
    Experiment(RunArgs),
}

type Handler = fn(&RunConfig) -> Result<(), Failure>;

fn exit_code(e: &Failure) -> u8 {
    match e {
        Failure::Check(_) => 3,
        Failure::Core(Error::NonFinite(_) | Error::Diverged { .. }) => 3,
        Failure::Core(Error::Io { .. }) => 4,
        Failure::Core(_) => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (name, args, run): (&str, &RunArgs, Handler) = match &cli.command {
        Command::Generate(a) => ("generate", a, commands::generate),
        Command::Train(a) => ("train", a, commands::train_cmd),
        Command::Evaluate(a) => ("evaluate", a, commands::evaluate),
        Command::Sweep(a) => ("sweep", a, commands::sweep),
        Command::Reconstruct(a) => ("reconstruct", a, commands::reconstruct),
        Command::Gradcheck(a) => ("gradcheck", a, commands::gradcheck),
        Command::Experiment(a) => ("experiment", a, commands::experiment),
    };
    let result = RunConfig::resolve(name, args)
        .map_err(Failure::from)
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Failure::Core(err) => eprintln!("error: {err}"),
                Failure::Check(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
