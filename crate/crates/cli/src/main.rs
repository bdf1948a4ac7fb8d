mod args;
mod commands;
mod outputs;
mod settings;
mod values;

use std::process::ExitCode;

use clap::Parser;
use crisp_core::CrispError;

use crate::args::Cli;

/// How a run failed; usage and validation problems exit with 2, everything
/// else with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Invalid(Vec<String>),
    Runtime(anyhow::Error),
}

impl From<CrispError> for Failure {
    fn from(e: CrispError) -> Self {
        match e {
            CrispError::InvalidConfig(errs) => Failure::Invalid(errs),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl Failure {
    fn report(&self) -> ExitCode {
        match self {
            Failure::Usage(msg) => {
                eprintln!("error[usage]: {msg}");
                ExitCode::from(2)
            }
            Failure::Invalid(errs) => {
                eprintln!("error[validation]: {} invalid setting(s)", errs.len());
                for e in errs {
                    eprintln!("  - {e}");
                }
                ExitCode::from(2)
            }
            Failure::Runtime(e) => {
                eprintln!("error[runtime]: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.jobs == Some(0) {
        return Failure::Usage("--jobs must be at least 1".into()).report();
    }
    match crisp_core::par::with_jobs(cli.jobs, || commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
