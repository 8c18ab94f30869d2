mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;
use stochprof::Error;

use args::{Cli, Command};

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Data(_) | Error::Parse { .. } | Error::Io(_)) => EXIT_DATA,
            Some(Error::Numerical(_) | Error::SingularHessian { .. } | Error::AllInfinite { .. }) => EXIT_NUMERICAL,
            Some(_) => EXIT_USAGE,
            None if error.downcast_ref::<std::io::Error>().is_some() => EXIT_DATA,
            None => EXIT_USAGE,
        };
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

pub fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: anyhow::anyhow!(message.into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Density(a) => commands::density(a),
        Command::Predict(a) => commands::predict(a),
        Command::Compare(a) => commands::compare(a),
        Command::Simstudy(a) => commands::simstudy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
