//! brw: statistical verification of boundary-case branching random walks
//! and their multiplicative-cascade limits.
//!
//! Every subcommand takes one TOML config file (see `configs/` for
//! examples) and writes a `report.json` plus CSV artifacts into the
//! configured output directory. Exit codes: 0 — all asserted checks
//! passed; 1 — at least one statistical check rejected; 2 — configuration
//! or runtime error.

mod config;
mod experiments;
mod farm;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::Experiment;
use farm::Farm;

#[derive(Parser)]
#[command(
    name = "brw",
    about = "Boundary branching random walks: limit-law verification and cascade sampling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Rescaled partition function vs its subordinated limit law.
    VerifyWbeta(RunArgs),
    /// The subordinated fixed-point identity, exact in law.
    VerifyStar(RunArgs),
    /// Gibbs-measure cylinder statistics vs the atomic limit.
    VerifyGibbs(RunArgs),
    /// Stabilization of the recentered minimal position.
    VerifyMin(RunArgs),
    /// Raw cylinder-mass data products (no assertions).
    SampleCascade(RunArgs),
    /// Assumption audit and psi profile for a law.
    CheckLaw(RunArgs),
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let (args, experiment) = match &cli.command {
        Command::VerifyWbeta(a) => (a, Experiment::VerifyWbeta),
        Command::VerifyStar(a) => (a, Experiment::VerifyStar),
        Command::VerifyGibbs(a) => (a, Experiment::VerifyGibbs),
        Command::VerifyMin(a) => (a, Experiment::VerifyMin),
        Command::SampleCascade(a) => (a, Experiment::SampleCascade),
        Command::CheckLaw(a) => (a, Experiment::CheckLaw),
    };
    let validated = config::load(&args.config, experiment)?;
    let workers = config::runtime_workers(&validated.raw)?;
    eprintln!(
        "{}: seed = {}, replicates = {}, workers = {}",
        experiment.name(),
        validated.raw.seed,
        validated.raw.replicates,
        workers
    );
    let farm = Farm::new(workers)?;
    match experiment {
        Experiment::VerifyWbeta => experiments::wbeta::run(&validated, &farm),
        Experiment::VerifyStar => experiments::star::run(&validated, &farm),
        Experiment::VerifyGibbs => experiments::gibbs::run(&validated, &farm),
        Experiment::VerifyMin => experiments::min::run(&validated, &farm),
        Experiment::SampleCascade => experiments::cascade_sample::run(&validated, &farm),
        Experiment::CheckLaw => experiments::check_law::run(&validated),
    }
}
