use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mmcool_cli::{exit, exit_code, golden, read_config, run, Golden, Job, Options, RunReport, Tolerances};

#[derive(Parser)]
#[command(name = "mmcool", version, about = "Multi-mode optomechanical cooling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for CSV tables and the JSON report; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Sweep resolution (points along Γ, detuning or contrast).
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Solver tolerance override; for `compare`, the relative tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Steady-state occupancies, optionally along a Γ sweep.
    Steady { config: PathBuf },
    /// RK4 time evolution of the moments.
    Evolve { config: PathBuf },
    /// Eigenvalue branches along a Γ sweep and the exceptional points.
    Eigen { config: PathBuf },
    /// Closed-form cooling limits next to the numerical result.
    Limits { config: PathBuf },
    /// Membrane coupling table and derived constants.
    Membrane { config: PathBuf },
    /// Drive ramp (quasi-static or time-domain).
    Schedule {
        config: PathBuf,
        /// Protocol file with `start` and `[[segment]]` entries.
        #[arg(long)]
        protocol: Option<PathBuf>,
        /// Second protocol to check path independence against.
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// n_tot against Γ, a detuning or the pumping contrast.
    Sweep { config: PathBuf },
    /// Compare a JSON report with a golden file.
    Compare {
        report: PathBuf,
        golden: PathBuf,
        /// Expected values below this magnitude are compared absolutely.
        #[arg(long, default_value_t = 0.0)]
        floor: f64,
    },
}

fn fail(code: i32, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("mmcool: {msg}");
    ExitCode::from(code as u8)
}

fn compare(report: &Path, golden_path: &Path, tol: Tolerances, format: Format) -> ExitCode {
    let text = match std::fs::read_to_string(report) {
        Ok(t) => t,
        Err(e) => return fail(exit::CONFIG, format!("{}: {e}", report.display())),
    };
    let report: RunReport = match serde_json::from_str(&text) {
        Ok(r) => r,
        Err(e) => return fail(exit::CONFIG, format!("schema mismatch: report: {e}")),
    };
    let checks = match Golden::load(golden_path).and_then(|g| golden::compare_against_golden(&report, &g, tol)) {
        Ok(c) => c,
        Err(e) => return fail(exit_code(&e), e),
    };
    let table = golden::checks_table(&checks);
    let printed = match format {
        Format::Csv => table.write_csv(std::io::stdout()).map_err(std::io::Error::other),
        Format::Json => serde_json::to_string_pretty(&table).map(|s| println!("{s}")).map_err(std::io::Error::other),
    };
    if let Err(e) = printed {
        return fail(exit::IO, e);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.quantity.as_str()).collect();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        fail(exit::MISMATCH, format!("outside tolerance: {}", failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(exit::USAGE, e);
        }
    }
    let (job, config) = match cli.command {
        Command::Steady { config } => (Job::Steady, config),
        Command::Evolve { config } => (Job::Evolve, config),
        Command::Eigen { config } => (Job::Eigen, config),
        Command::Limits { config } => (Job::Limits, config),
        Command::Membrane { config } => (Job::Membrane, config),
        Command::Schedule { config, protocol, against } => (Job::Schedule { protocol, against }, config),
        Command::Sweep { config } => (Job::Sweep, config),
        Command::Compare { report, golden, floor } => {
            return compare(&report, &golden, Tolerances { relative: cli.tol.unwrap_or(0.0), floor }, cli.format)
        }
    };
    let opts = Options { steps: cli.steps, tol: cli.tol };
    let report = match read_config(&config).and_then(|table| run(&job, &table, opts)) {
        Ok(r) => r,
        Err(e) => return fail(exit_code(&e), e),
    };
    let written = match (&cli.out, cli.format) {
        (Some(dir), f) => report.write_to(dir, f == Format::Csv).map(|_| ()),
        (None, Format::Csv) => report.print_csv(std::io::stdout().lock()),
        (None, Format::Json) => report.to_json().map(|s| println!("{s}")).map_err(std::io::Error::other),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(exit::IO, e),
    }
}
