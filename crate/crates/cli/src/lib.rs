//! Command-line front end: config ingestion, solver and checker runs, and
//! byte-stable CSV/JSON artifacts with a run manifest.

pub mod args;
pub mod commands;
pub mod io;

use anyhow::Result;

use args::{Cli, Command, Common};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ChecksFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::ChecksFailed => 1,
        }
    }
}

/// Exit code for operational errors.
pub const EXIT_ERROR: u8 = 2;

fn common(cmd: &Command) -> Option<&Common> {
    match cmd {
        Command::Solve(a) => Some(&a.common),
        Command::Check(a) => Some(&a.common),
        Command::Evaluate(a) => Some(&a.common),
        Command::Simulate(a) => Some(&a.common),
        Command::Oracle(a) => Some(&a.common),
        Command::Sweep(a) => Some(&a.common),
        Command::MakeConfig(_) => None,
    }
}

fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Solve(a) => commands::cmd_solve(a),
        Command::Check(a) => commands::cmd_check(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Oracle(a) => commands::cmd_oracle(a),
        Command::Sweep(a) => commands::cmd_sweep(a),
        Command::MakeConfig(a) => commands::cmd_make_config(a),
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match common(&cli.command).and_then(|c| c.threads) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| dispatch(&cli.command))
        }
        None => dispatch(&cli.command),
    }
}
