//! Command-line front end: file formats, configuration, and subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod topology;

use std::ffi::OsString;

use clap::Parser;
use gtsim_core::experiment::SweepMode;

use crate::cli::{Cli, Command};
use crate::commands::{Context, Status};
use crate::config::FileConfig;
use crate::error::{CliResult, EXIT_INVALID_INPUT, EXIT_OK, EXIT_VERIFICATION};
use crate::output::OutDir;

/// Parses `args` (program name first), runs the command, and returns the exit code.
pub fn run_main<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::Failed(msg)) => {
            eprintln!("gtsim: {msg}");
            EXIT_VERIFICATION
        }
        Err(e) => {
            eprintln!("gtsim: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<Status> {
    let config = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(config.seed),
        out: OutDir(cli.out.clone().or_else(|| config.out.clone())),
        config,
    };
    match &cli.command {
        Command::Spectrum(a) => commands::spectrum(a, &ctx),
        Command::VerifyLemmas(a) => commands::verify_lemmas(a, &ctx),
        Command::Run(a) => commands::run(a, &ctx),
        Command::SweepP(a) => commands::sweep(SweepMode::P, a, &ctx),
        Command::SweepC(a) => commands::sweep(SweepMode::C, a, &ctx),
        Command::ConsensusDemo(a) => commands::demo(a, &ctx),
    }
}
