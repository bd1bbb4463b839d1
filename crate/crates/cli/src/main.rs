mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use config::{Cli, Command};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const FAILURE: u8 = 2;
    pub const REFUTED: u8 = 3;
    pub const INFEASIBLE: u8 = 4;
    pub const NOT_CONVERGED: u8 = 5;
    pub const NOT_UNIQUE: u8 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Library(#[from] representer::Error),
    #[error("{0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn internal(e: impl std::fmt::Display) -> Self {
        CliError::Internal(e.to_string())
    }

    pub fn code(&self) -> u8 {
        use representer::Error as E;
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io(_) | CliError::Internal(_) => exit::FAILURE,
            CliError::Library(e) => match e {
                E::Infeasible { .. } => exit::INFEASIBLE,
                E::NotConverged { .. } => exit::NOT_CONVERGED,
                E::NotUnique(_) | E::ZeroMinimizer => exit::NOT_UNIQUE,
                E::InvalidSpec(_)
                | E::InvalidArgument(_)
                | E::Data(_)
                | E::DimensionMismatch { .. }
                | E::DimsTooSmall { .. }
                | E::DimTooSmall(_)
                | E::ZeroVector
                | E::Unsupported(_) => exit::USAGE,
                _ => exit::FAILURE,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    let config = cli.config.as_deref();
    let outcome = match &cli.command {
        Command::Check(args) => config::merge(args, config).and_then(|a| commands::check(&a)),
        Command::Solve(args) => config::merge(args, config).and_then(|a| commands::solve(&a)),
        Command::Mtl(args) => config::merge(args, config).and_then(|a| commands::mtl(&a)),
        Command::GammaPath(args) => config::merge(args, config).and_then(|a| commands::gamma_path(&a)),
        Command::Counterexample(args) => config::merge(args, config).and_then(|a| commands::counterexample(&a)),
        Command::GenData(args) => config::merge(args, config).and_then(|a| commands::gen_data(&a)),
        Command::Report(args) => commands::report(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
