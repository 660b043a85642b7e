//! Subcommand implementations, run reports and golden-file comparison for the
//! `mmcool` executable.

pub mod commands;
pub mod golden;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use mmcool::config::parse_document;
use mmcool::{Error, Result};

pub use commands::Options;
pub use golden::{compare_against_golden, Check, Golden, Tolerances};
pub use report::{Cell, Flag, RunReport, Table};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// A golden comparison found quantities outside tolerance.
    pub const MISMATCH: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const USAGE: i32 = 64;
    pub const IO: i32 = 74;
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        exit::CONFIG
    } else {
        exit::NUMERICAL
    }
}

#[derive(Debug, Clone)]
pub enum Job {
    Steady,
    Evolve,
    Eigen,
    Limits,
    Membrane,
    Schedule { protocol: Option<PathBuf>, against: Option<PathBuf> },
    Sweep,
}

pub fn read_config(path: &std::path::Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_document(&text)
}

/// Runs one subcommand on a parsed config and stamps the wall time.
pub fn run(job: &Job, table: &toml::Table, opts: Options) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = match job {
        Job::Steady => commands::steady(table, opts),
        Job::Evolve => commands::evolve(table, opts),
        Job::Eigen => commands::eigen(table, opts),
        Job::Limits => commands::limits(table, opts),
        Job::Membrane => commands::membrane(table, opts),
        Job::Schedule { protocol, against } => commands::schedule(table, opts, protocol.as_deref(), against.as_deref()),
        Job::Sweep => commands::sweep(table, opts),
    }?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}
