//! The `ergopt` command-line driver.
//!
//! Each subcommand reads a problem file, computes, and writes JSON and CSV
//! into the output directory. Exit status: 0 pass, 2 certified failure,
//! 1 error. Standard error gets one human-readable line followed by the
//! same information as one line of JSON.

pub mod config;
mod commands;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ergopt_core::Error;
use serde::Serialize;

pub use config::{Problem, ProblemConfig};

#[derive(Debug, Parser)]
#[command(name = "ergopt", version, about = "Ergodic optimization for expanding interval maps")]
pub struct Cli {
    /// Problem file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 or unset: all cores).
    #[arg(long, global = true, env = "ERGOPT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Leading eigenvalue, eigenfunction and eigenmeasure at one β.
    Eigen {
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// (1/β) log v_β along a schedule against the calibrated subaction.
    Anneal {
        /// Comma-separated, increasing; defaults to the problem's schedule.
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<f64>>,
    },
    /// Maximizing orbit, calibrated subaction, errors and deviations.
    Subaction,
    /// Dual potential, its maximizing cycle, dual subaction and R* check.
    Dual,
    /// Kernel H_β(ω, x) along the schedule.
    Kernel {
        /// Eventually periodic point "head|cycle".
        #[arg(long)]
        omega: String,
        #[arg(long)]
        x: f64,
    },
    /// Candidate words, selection, breakpoints and certificates.
    Piecewise,
    /// Periodic orbits up to a period, ranked by average.
    Orbits {
        #[arg(long, default_value_t = 8)]
        max_period: usize,
    },
    /// Mañé potential S(x, y) and the Aubry test at x.
    Mane {
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
    },
    /// Contraction audit, potential positivity and an involution smoke test.
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eigen { .. } => "eigen",
            Command::Anneal { .. } => "anneal",
            Command::Subaction => "subaction",
            Command::Dual => "dual",
            Command::Kernel { .. } => "kernel",
            Command::Piecewise => "piecewise",
            Command::Orbits { .. } => "orbits",
            Command::Mane { .. } => "mane",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    CertifiedFailure,
    Error,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Error => 1,
            Status::CertifiedFailure => 2,
        }
    }
}

/// What a run produced, mirrored to standard error.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: &'static str,
    pub status: Status,
    pub message: String,
    pub reasons: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

impl Outcome {
    pub fn code(&self) -> i32 {
        self.status.code()
    }

    fn from_error(command: &'static str, e: Error) -> Self {
        // refusals the pipeline certifies are failures, not crashes
        let status = match e {
            Error::OrientationReversing | Error::NonUniqueMaximizer(_) => Status::CertifiedFailure,
            _ => Status::Error,
        };
        Self {
            command,
            status,
            message: e.to_string(),
            reasons: vec![e.to_string()],
            outputs: Vec::new(),
        }
    }

    /// The human line and the JSON line.
    pub fn diagnostics(&self) -> (String, String) {
        let tag = match self.status {
            Status::Pass => "ok",
            Status::CertifiedFailure => "FAIL",
            Status::Error => "error",
        };
        let human = format!("ergopt {}: {tag}: {}", self.command, self.message);
        let json = serde_json::to_string(self).unwrap_or_else(|_| "{}".into());
        (human, json)
    }
}

/// Runs one command on the configured thread pool.
pub fn run(cli: &Cli) -> Outcome {
    let name = cli.command.name();
    let go = || match commands::dispatch(cli) {
        Ok(o) => o,
        Err(e) => Outcome::from_error(name, e),
    };
    #[cfg(feature = "parallel")]
    {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads.filter(|&n| n > 0) {
            b = b.num_threads(n);
        }
        match b.build() {
            Ok(pool) => pool.install(go),
            Err(e) => Outcome::from_error(name, Error::Config(format!("thread pool: {e}"))),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        go()
    }
}

/// Parses `args`, runs, prints diagnostics, returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = run(&cli);
    let (human, json) = outcome.diagnostics();
    // a closed stderr must not turn into a panic
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{human}");
    let _ = writeln!(err, "{json}");
    outcome.code()
}
