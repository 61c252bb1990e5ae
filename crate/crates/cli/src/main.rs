//! `bchlab`: file-based front end to the solitary-wave toolkit.
//!
//! Exit status is 0 when every check passes, 1 when one fails or a run
//! errors, and 2 for an invalid configuration.

mod commands;
mod config;
mod report;

use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::{Flags, Invalid, RunConfig};

#[derive(Parser)]
#[command(name = "bchlab", version, about = "Solitary waves of the b-family: profiles, stability criterion, spectra, evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the wave profile and its conserved quantities.
    Profile,
    /// Level sets of the travelling-wave energy, including the homoclinic loop.
    Portrait,
    /// Sign of dQ/dc at one point, or the transformed sweep with --sweep.
    Criterion {
        #[arg(long)]
        sweep: bool,
    },
    /// Spectrum of the second variation; --fast skips the coercivity solves.
    Spectrum,
    /// Evolve the (optionally perturbed) wave and track the orbital distance.
    Evolve,
    /// Run the acceptance suite; --fast keeps the quick criteria.
    VerifyAll,
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    let report = bchlab::sweep::with_jobs(cfg.jobs, || match &cli.command {
        Command::Profile => commands::profile(&cfg),
        Command::Portrait => commands::portrait(&cfg),
        Command::Criterion { sweep } => commands::criterion(&cfg, *sweep),
        Command::Spectrum => commands::spectrum_cmd(&cfg),
        Command::Evolve => commands::evolve(&cfg),
        Command::VerifyAll => commands::verify_all(&cfg),
    })?;
    report.print();
    report.write(&cfg.out)?;
    Ok(report.passed)
}

fn is_invalid(err: &anyhow::Error) -> bool {
    if err.downcast_ref::<Invalid>().is_some() {
        return true;
    }
    matches!(
        err.downcast_ref::<bchlab::Error>(),
        Some(bchlab::Error::Inadmissible(_) | bchlab::Error::Unsupported(_) | bchlab::Error::GridTooCoarse(_))
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_invalid(&e) { 2 } else { 1 })
        }
    }
}
