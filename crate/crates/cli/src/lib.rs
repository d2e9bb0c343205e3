//! Command-line front end: argument parsing, waveform files, results
//! containers and the subcommand implementations.

pub mod args;
pub mod commands;
pub mod container;
pub mod error;
pub mod waveio;

use args::{Cli, Command};
pub use error::CliError;

/// Runs a parsed command line, on a dedicated pool when `--threads` is set.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match cli.common.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let c = &cli.common;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(c, a),
        Command::Analyze(a) => commands::analyze_cmd(c, a),
        Command::Sweep(a) => commands::sweep_cmd(c, a),
        Command::ScanPol(a) => commands::scan_cmd(c, a),
        Command::Fock(a) => commands::fock_cmd(c, a),
        Command::Report(a) => commands::report_cmd(c, a),
    }
}
