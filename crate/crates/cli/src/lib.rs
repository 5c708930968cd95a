//! Command-line frontend for the `derivbound` library.

pub mod commands;
pub mod config;
pub mod emit;
pub mod error;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Parser;

use crate::config::{Cli, Command, RunConfig};
use crate::emit::{OutDir, Outcome};
use crate::error::{CliError, EXIT_INPUT, EXIT_VIOLATION};

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    let outcome = resolve(&cli).and_then(|cfg| execute(&cfg, &cli.out));
    match outcome {
        Ok(o) if o.violations.is_empty() => 0,
        Ok(o) => {
            for v in &o.violations {
                eprintln!("violation: {v}");
            }
            EXIT_VIOLATION
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Builds the run configuration from a config file or the subcommand;
/// `--seed` overrides the file's seed.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    match (&cli.config, &cli.command) {
        (Some(_), Some(_)) => Err(CliError::Input("--config cannot be combined with a subcommand".into())),
        (None, None) => Err(CliError::Input("a subcommand or --config is required".into())),
        (None, Some(cmd)) => Ok(RunConfig {
            seed: cli.seed.unwrap_or(0),
            command: cmd.clone(),
        }),
        (Some(path), None) => {
            let body = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let mut cfg: RunConfig = serde_json::from_str(&body)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            Ok(cfg)
        }
    }
}

/// Runs one configuration and writes every artifact under `out`.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let started = emit::now();
    let mut dir = OutDir::create(out)?;
    let seed = cfg.seed;
    let outcome = match &cfg.command {
        Command::CheckFamily(a) => commands::check_family(a, &mut dir)?,
        Command::Estimate(a) => commands::estimate(a, seed, &mut dir)?,
        Command::Witness(a) => commands::witness(a, &mut dir)?,
        Command::Pipeline(a) => commands::pipeline(a, seed, &mut dir)?,
        Command::Martingale(a) => commands::martingale(a, seed, &mut dir)?,
        Command::Transfer(a) => commands::transfer(a, &mut dir)?,
        Command::PdeCheck(a) => commands::pde(a, &mut dir)?,
    };
    emit::finish(&mut dir, cfg, &outcome, started)?;
    Ok(outcome)
}
