// SPDX-License-Identifier: MIT OR Apache-2.0

use std::process::ExitCode;

use clap::Parser;

mod apply;
mod args;
mod common;
mod demo;
mod eval;
mod pilot;
mod report;
mod select;

use args::{Cli, Command};
use common::CliError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Pilot(a) => pilot::run(a),
        Command::Select(a) => select::run(a),
        Command::Apply(a) => apply::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Report(a) => report::run(a),
        Command::HiddenDemo(a) => demo::run_demo(a),
        Command::Lens(a) => demo::run_lens(a),
    };
    match result {
        Ok(o) if o.failures == 0 => ExitCode::SUCCESS,
        Ok(o) => {
            eprintln!("error: {} unit(s) failed, see progress.log", o.failures);
            ExitCode::from(1)
        }
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
