//! `pathsens` command-line front end.
//!
//! Exit status: 0 success, 2 configuration error, 3 numerical error,
//! 4 partial results (the report is written but a run stopped early).

mod commands;
mod config;
mod error;
mod exact;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, ModelKind, RunArgs, Source};
use error::{CliError, PARTIAL};

#[derive(Debug, Parser)]
#[command(name = "pathsens", version, about = "Relative entropy rate and path-space Fisher information experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the model named by --model or by the config file.
    Run(RunArgs),
    /// Schlögl reaction network.
    Schlogl(RunArgs),
    /// Morse-potential Langevin chain.
    Langevin(RunArgs),
    /// ZGB lattice model of CO oxidation.
    Zgb(RunArgs),
    /// Exact oracles.
    #[command(subcommand)]
    Exact(exact::ExactCommand),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(PARTIAL),
        Err(e) => {
            eprintln!("pathsens: {e}");
            e.exit_code()
        }
    }
}

/// Returns whether the results are partial.
fn dispatch(command: Command) -> Result<bool, CliError> {
    let (args, forced) = match command {
        Command::Exact(cmd) => return exact::run(&cmd).map(|_| false),
        Command::Run(a) => (a, None),
        Command::Schlogl(a) => (a, Some(ModelKind::Schlogl)),
        Command::Langevin(a) => (a, Some(ModelKind::Langevin)),
        Command::Zgb(a) => (a, Some(ModelKind::Zgb)),
    };
    let (mut cfg, source) = match &args.config {
        Some(path) => config::load(path)?,
        None => (ExperimentConfig::default(), Source::default()),
    };
    if let (Some(forced), Some(flag)) = (forced, args.model) {
        if forced != flag {
            return Err(CliError::Config(format!(
                "--model {} conflicts with the {} command",
                flag.name(),
                forced.name()
            )));
        }
    }
    cfg.apply(&args)?;
    let model = forced
        .or(cfg.model)
        .ok_or_else(|| CliError::Config("no model selected; pass --model or set `model` in the config".into()))?;
    let resolved = cfg.resolve(model, &source)?;
    let merged = match model {
        ModelKind::Schlogl => commands::schlogl(&resolved)?,
        ModelKind::Langevin => commands::langevin(&resolved)?,
        ModelKind::Zgb => commands::zgb(&resolved)?,
    };
    Ok(merged.report.partial)
}
