//! `urnbridge`: simulate urn streams, estimate the exponent, run the
//! bridge goodness-of-fit test, tabulate null laws and check covariances.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{load_file, CommandName, ConfigError, RunConfig, Settings};

#[derive(Parser)]
#[command(name = "urnbridge", version, about)]
struct Cli {
    /// TOML file with default settings; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a stream from a truncated Zipf urn law
    Simulate(Settings),
    /// Estimate the exponent of a stream
    Estimate(Settings),
    /// Bridge goodness-of-fit test on a stream
    Test(Settings),
    /// Tabulate the null law of the statistic
    Tabulate(Settings),
    /// Compare empirical occupancy covariances with the limit kernels
    Covcheck(Settings),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => load_file(path)?,
        None => Settings::default(),
    };
    let (name, flags) = match cli.command {
        Command::Simulate(s) => (CommandName::Simulate, s),
        Command::Estimate(s) => (CommandName::Estimate, s),
        Command::Test(s) => (CommandName::Test, s),
        Command::Tabulate(s) => (CommandName::Tabulate, s),
        Command::Covcheck(s) => (CommandName::Covcheck, s),
    };
    let cfg = RunConfig::new(name, flags.over(file));
    let bytes = match name {
        CommandName::Simulate => commands::simulate(&cfg)?,
        CommandName::Estimate => commands::estimate(&cfg)?,
        CommandName::Test => commands::test(&cfg)?,
        CommandName::Tabulate => commands::tabulate(&cfg)?,
        CommandName::Covcheck => commands::covcheck_cmd(&cfg)?,
    };
    match &cfg.settings.output {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
