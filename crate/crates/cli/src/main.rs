//! `gesture`: synthesize, train, evaluate and stream-classify IMU gesture
//! recordings.
//!
//! Exit codes: 0 on success, 1 for data errors (unreadable or corrupt input,
//! failed training), 2 for usage errors (bad or missing flags).

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, FileConfig, Overlay};

/// Why a command failed, which decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl std::fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }
}

macro_rules! data_error {
    ($($ty:ty),*) => {
        $(impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure::Data(e.into())
            }
        })*
    };
}

data_error!(
    anyhow::Error,
    imu_gesture::Error,
    std::io::Error,
    toml::de::Error,
    toml::ser::Error
);

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => {
            FileConfig::load(path).map_err(|e| Failure::Usage(e.context(format!("config file {}", path.display()))))?
        }
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => commands::synth(a.overlay(file.synth)),
        Command::Train(a) => commands::train(a.overlay(file.train)),
        Command::Eval(a) => commands::eval(a.overlay(file.eval)),
        Command::Infer(a) => commands::infer(a.overlay(file.infer)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            eprintln!("run `gesture --help` for usage");
            ExitCode::from(2)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
