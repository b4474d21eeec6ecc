mod args;
mod commands;
mod error;
mod workspace;

use std::panic;
use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, CliResult};
use crate::workspace::Workspace;

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs {jobs}: {e}")))?;
    }
    let ws = Workspace::new(&cli.workspace);
    match &cli.command {
        Command::Ingest(a) => commands::ingest(&ws, a),
        Command::Synthgen(a) => commands::synthgen(a),
        Command::BuildIndex(a) => commands::build_index(&ws, a),
        Command::LearnWeights(a) => commands::learn(&ws, a),
        Command::Query(a) => commands::query(&ws, a),
        Command::Evaluate(a) => commands::evaluate(&ws, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    // A panic anywhere below is a broken invariant, not bad input.
    match panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(3),
    }
}
