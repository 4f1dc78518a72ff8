//! Scenario runner: parse a config, assemble devices and a runtime,
//! execute, and emit trace JSON, metrics CSV, and a plain-text summary.

pub mod config;
pub mod scenario;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

pub use config::{resolve, Resolved, ScenarioConfig};
pub use scenario::{compare, execute, run_scenario, CompareAxis, CompareReport};

/// Process-level error classes; the exit code is the contract.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit code 2).
    Config(String),
    /// Execution failure (exit code 3).
    Execution(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Execution(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Execution(msg) => write!(f, "execution error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Load and resolve a config file, applying command-line overrides.
pub fn load_config(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<Resolved, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = ScenarioConfig::from_json(&text)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if let Some(out) = out_override {
        config.output_dir = Some(out);
    }
    resolve(&config)
}

/// `run` subcommand body.
pub fn execute_run(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<(), CliError> {
    let resolved = load_config(path, seed_override, out_override)?;
    run_scenario(&resolved)
}

/// `compare` subcommand body; returns the table to print.
pub fn execute_compare(
    path: &Path,
    axis: CompareAxis,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<String, CliError> {
    let resolved = load_config(path, seed_override, out_override)?;
    let report = compare(&resolved, axis)?;
    Ok(report.table)
}
