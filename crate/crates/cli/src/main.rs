mod args;
mod commands;
mod report;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, StoreCommand};

/// Exit 2: the run was misconfigured or its inputs failed validation.
pub const EXIT_CONFIG: u8 = 2;
/// Exit 1: evaluation itself failed.
pub const EXIT_EVAL: u8 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl fmt::Display) -> Self {
        Failure { code: EXIT_CONFIG, message: message.to_string() }
    }

    pub fn eval(message: impl fmt::Display) -> Self {
        Failure { code: EXIT_EVAL, message: message.to_string() }
    }
}

pub type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stats(a) => commands::stats(&a),
        Command::Score(a) => commands::score(&a),
        Command::Standardize(a) => commands::standardize(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::TriggerStore(StoreCommand::Put(a)) => commands::store_put(&a),
        Command::TriggerStore(StoreCommand::Get(a)) => commands::store_get(&a),
        Command::TriggerStore(StoreCommand::List(a)) => commands::store_list(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
