//! The experiment runner behind the `entropyforge` binary.
//!
//! Every subcommand validates its configuration in full, computes a table,
//! and writes `<out>/<command>.csv` plus `<out>/<command>.manifest.json`.
//! Exit codes: 0 when every hard check passes, 1 on a failed check, 2 on a
//! configuration error, 3 when budgets left no completed rows.

mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::{Resolved, RunConfig};
pub use output::{write_atomic, Manifest, RowSeed, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "entropyforge", version, about = "Entropy experiments for random walks, coset chains and invariant random subgroups")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Size of the worker pool; the global rayon pool when absent.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
    /// Writes floats as exact hexadecimal literals.
    #[arg(long, global = true)]
    pub hex_floats: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Exact H_n, H_n/n and increments for the walk or a coset chain.
    EntropySeries,
    /// Bowen averages over percolation IRSs against the mixture prediction.
    Realize,
    /// Closed-site marginals and mixed-window frequencies of percolation.
    PercolationStats,
    /// Hitting times and first-entry lengths for a finite-index subgroup.
    HittingStats,
    /// Conjugate exchange and lift decomposition identities.
    LiftCheck,
    /// Monotonicity, endpoints, transition bounds and projection checks.
    CosetCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EntropySeries => "entropy-series",
            Command::Realize => "realize",
            Command::PercolationStats => "percolation-stats",
            Command::HittingStats => "hitting-stats",
            Command::LiftCheck => "lift-check",
            Command::CosetCheck => "coset-check",
        }
    }
}

/// What a command produced before anything is written.
#[derive(Debug)]
pub(crate) struct Report {
    pub table: Table,
    pub row_seeds: Vec<RowSeed>,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
    pub budget_exhausted: bool,
    /// Rows written without a result.
    pub skipped: usize,
}

impl Report {
    fn new(header: &[&'static str], hex: bool) -> Self {
        Report {
            table: Table::new(header, hex),
            row_seeds: Vec::new(),
            failures: Vec::new(),
            warnings: Vec::new(),
            diagnostics: serde_json::Map::new(),
            budget_exhausted: false,
            skipped: 0,
        }
    }

    fn exit_code(&self) -> i32 {
        if !self.failures.is_empty() {
            EXIT_ASSERTION
        } else if self.budget_exhausted && self.table.len() == self.skipped {
            EXIT_BUDGET
        } else {
            EXIT_OK
        }
    }
}

/// Exit code and files of one invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub csv: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> RunOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_cli(&cli),
        Err(e) => {
            let _ = e.print();
            RunOutcome {
                exit_code: if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK },
                csv: None,
                manifest: None,
            }
        }
    }
}

pub fn run_cli(cli: &Cli) -> RunOutcome {
    let start = Instant::now();
    let name = cli.command.name();
    let g = &cli.global;
    let loaded = match &g.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let config = loaded.map(|mut c| {
        if let Some(seed) = g.seed {
            c.seed = seed;
        }
        if let Some(out) = &g.out {
            c.out_dir = out.clone();
        }
        c
    });
    let out_dir = match &config {
        Ok(c) => c.out_dir.clone(),
        Err(_) => g.out.clone().unwrap_or_else(|| RunConfig::default().out_dir),
    };
    let mut manifest = Manifest {
        command: name.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        config: config
            .as_ref()
            .ok()
            .and_then(|c| serde_json::to_value(c).ok())
            .unwrap_or(serde_json::Value::Null),
        threads: g.threads.map(|t| t as usize),
        hex_floats: g.hex_floats,
        wall_time_seconds: 0.0,
        exit_code: EXIT_OK,
        csv: None,
        rows: 0,
        row_seeds: Vec::new(),
        failures: Vec::new(),
        warnings: Vec::new(),
        diagnostics: serde_json::Map::new(),
    };
    let csv_path = out_dir.join(format!("{name}.csv"));
    let manifest_path = out_dir.join(format!("{name}.manifest.json"));

    let result = config
        .and_then(|c| c.resolve().map(|r| (c, r)))
        .and_then(|(c, r)| {
            in_pool(g.threads, || commands::execute(cli.command, &c, &r, g.hex_floats))?
        });
    let mut outcome = RunOutcome {
        exit_code: EXIT_OK,
        csv: None,
        manifest: None,
    };
    match result {
        Err(msg) => {
            eprintln!("{name}: configuration error: {msg}");
            manifest.failures.push(format!("configuration: {msg}"));
            outcome.exit_code = EXIT_CONFIG;
        }
        Ok(report) => {
            outcome.exit_code = report.exit_code();
            match write_atomic(&csv_path, report.table.to_csv().as_bytes()) {
                Ok(()) => {
                    manifest.csv = Some(csv_path.display().to_string());
                    outcome.csv = Some(csv_path.clone());
                }
                Err(e) => {
                    eprintln!("{name}: cannot write {}: {e}", csv_path.display());
                    outcome.exit_code = EXIT_CONFIG;
                }
            }
            for f in &report.failures {
                eprintln!("{name}: FAILED {f}");
            }
            for w in &report.warnings {
                eprintln!("{name}: warning: {w}");
            }
            manifest.rows = report.table.len();
            manifest.row_seeds = report.row_seeds;
            manifest.failures = report.failures;
            manifest.warnings = report.warnings;
            manifest.diagnostics = report.diagnostics;
        }
    }
    manifest.exit_code = outcome.exit_code;
    manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    let json = serde_json::to_string_pretty(&manifest).expect("manifests serialize");
    match write_atomic(&manifest_path, format!("{json}\n").as_bytes()) {
        Ok(()) => outcome.manifest = Some(manifest_path),
        Err(e) => eprintln!("{name}: cannot write {}: {e}", manifest_path.display()),
    }
    outcome
}

fn in_pool<T: Send>(threads: Option<u32>, f: impl FnOnce() -> T + Send) -> Result<T, String> {
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| format!("cannot start {n} threads: {e}")),
    }
}
