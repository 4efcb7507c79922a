//! `psdetect` command-line entry point.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::{overlay, FileConfig};
use psdetect::par::Execution;

/// A problem with flags or configuration rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Gen(a) => commands::gen(overlay(a, file.gen)?),
        Command::Pipeline(a) => commands::pipeline(overlay(a, file.pipeline)?, exec),
        Command::Vocab(a) => commands::vocab(overlay(a, file.vocab)?, exec),
        Command::Stats(a) => commands::stats(overlay(a, file.stats)?, exec),
        Command::Train(a) => commands::train(overlay(a, file.train)?, exec),
        Command::Eval(a) => commands::eval(overlay(a, file.eval)?, exec),
        Command::Crossval(a) => commands::crossval(overlay(a, file.crossval)?, exec),
        Command::Report(a) => commands::report(overlay(a, file.report)?),
    }
}

/// The error chain joined by `: `, skipping causes a parent already quotes.
fn describe(err: &anyhow::Error) -> String {
    let mut message = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if message.contains(&text) {
            continue;
        }
        if !message.is_empty() {
            message.push_str(": ");
        }
        message.push_str(&text);
    }
    message
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PSDETECT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let usage = err.downcast_ref::<UsageError>().is_some();
            eprintln!("error: {}", describe(&err));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
