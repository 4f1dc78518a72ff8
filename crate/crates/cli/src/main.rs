use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qtr_cli::{execute_compare, execute_run, CompareAxis};

/// Hybrid quantum-classical task runtime scenario runner.
#[derive(Parser)]
#[command(name = "qtr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.json, metrics.csv, summary.txt.
    Run {
        /// Path to the scenario config (JSON).
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long = "out")]
        out: Option<PathBuf>,
    },
    /// Run the scenario under both values of an axis and compare.
    Compare {
        /// Path to the scenario config (JSON).
        config: PathBuf,
        /// Comparison axis: execution mode or latency preset.
        #[arg(long)]
        axis: Axis,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "out")]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Mode,
    Latency,
}

impl From<Axis> for CompareAxis {
    fn from(axis: Axis) -> CompareAxis {
        match axis {
            Axis::Mode => CompareAxis::Mode,
            Axis::Latency => CompareAxis::Latency,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => execute_run(&config, seed, out),
        Command::Compare {
            config,
            axis,
            seed,
            out,
        } => match execute_compare(&config, axis.into(), seed, out) {
            Ok(table) => {
                print!("{table}");
                Ok(())
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
