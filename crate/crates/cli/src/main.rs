mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Failure;
use config::{resolve, RunConfig};

fn run(cli: Cli) -> Result<(), Failure> {
    let name = cli.command.name();
    let config = match &cli.config {
        Some(p) => Some(RunConfig::load(p).map_err(Failure::Usage)?),
        None => None,
    };
    let cfg = config.as_ref();
    let usage = Failure::Usage;
    match cli.command {
        Command::Simulate(a) => commands::simulate_cmd(resolve(name, &a, cfg).map_err(usage)?),
        Command::Ingest(a) => commands::ingest_cmd(resolve(name, &a, cfg).map_err(usage)?),
        Command::Fit(a) => commands::fit_cmd(resolve(name, &a, cfg).map_err(usage)?),
        Command::Train(a) => commands::train_cmd(resolve(name, &a, cfg).map_err(usage)?),
        Command::Study(a) => commands::study_cmd(resolve(name, &a, cfg).map_err(usage)?),
        Command::Report(a) => commands::report_cmd(resolve(name, &a, cfg).map_err(usage)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
