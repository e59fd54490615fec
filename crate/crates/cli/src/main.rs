//! `robust-unmix`: generate synthetic scenes, unmix data, and run noise sweeps.

mod bandmask;
mod config;
mod generate;
mod svg;
mod sweep;
mod unmix;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use unmix_core::UnmixError;

#[derive(Debug, Parser)]
#[command(
    name = "robust-unmix",
    version,
    about = "Robust hyperspectral unmixing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene and write it to a directory.
    Generate(generate::GenerateArgs),
    /// Unmix a D x N data matrix.
    Unmix(unmix::UnmixArgs),
    /// Run methods over a grid of SNR levels and repeats.
    Sweep(sweep::SweepArgs),
    /// Compare full-band and masked-band unmixing of one scene.
    BandmaskCompare(bandmask::BandmaskArgs),
}

/// Exit codes: 0 success, 2 usage, 3 data validation, 4 numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<UnmixError>() {
        Some(
            UnmixError::NonPositiveSigma(_)
            | UnmixError::DegenerateBand
            | UnmixError::DegenerateData(_),
        ) => 4,
        Some(_) => 3,
        None if err.downcast_ref::<config::UsageError>().is_some() => 2,
        None => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => generate::run(&args),
        Command::Unmix(args) => unmix::run(&args),
        Command::Sweep(args) => sweep::run(&args),
        Command::BandmaskCompare(args) => bandmask::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
