use std::path::PathBuf;
use std::process::ExitCode;

use atlc_cli::commands::{self, EXIT_ERROR};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "atlc", about = "Event-triggered safety-filter scenarios for adaptive cruise control")]
struct Cli {
    /// Log every time-scale candidate to candidates.csv.
    #[arg(long, global = true)]
    trace_candidates: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key; the value is read as JSON, else as a string.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate every *.json scenario of a directory and tabulate the results.
    Compare {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feasibility margin over the configured time-scale grid at one state.
    MarginMap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        z: f64,
        #[arg(long, allow_negative_numbers = true)]
        v: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { 0 });
        }
    };
    let trace = cli.trace_candidates;
    let result = match &cli.command {
        Command::Run { config, set, out } => commands::run(config, set, out, trace),
        Command::Compare { dir, out } => commands::compare(dir, out, trace),
        Command::MarginMap { config, z, v, out } => commands::margin_map(config, *z, *v, out),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
