//! Command-line runner: parses flags and the TOML config, runs one study on
//! a dedicated thread pool and writes its CSV with a provenance preamble.
//!
//! Exit codes: 0 success, 1 failed `--check`, 2 usage or config error,
//! 3 more than 1% of paths aborted.

pub mod args;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::args::Cli;
use crate::config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Abort fraction above which a run counts as divergence-dominated.
pub const MAX_ABORT_FRACTION: f64 = 0.01;

/// Environment variable holding the default thread count.
pub const THREADS_ENV: &str = "SWITCHDIFF_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    /// Divergence-type library errors map to exit 3, everything else to 2.
    pub fn library(context: &str, e: switchdiff::Error) -> Self {
        let code = match e {
            switchdiff::Error::Divergence { .. } | switchdiff::Error::EstimationFailed(_) => EXIT_DIVERGENCE,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: format!("{context}: {e}"),
        }
    }
}

/// One acceptance threshold evaluated under `--check`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// What a subcommand produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub body: String,
    pub checks: Vec<Check>,
    pub aborted: usize,
    pub attempted: usize,
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn thread_count(cfg: &RunConfig) -> Result<usize, CliError> {
    let n = match cfg.threads {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("{THREADS_ENV}: `{v}` is not a thread count")))?,
            Err(_) => return Ok(0),
        },
    };
    if n == 0 {
        return Err(CliError::usage("threads must be at least 1"));
    }
    Ok(n)
}

fn preamble(command: &str, cfg: &RunConfig) -> String {
    format!(
        "# switchdiff {} {command}\n# seed {}\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.seed.unwrap_or_default(),
        cfg.echo()
    )
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let flags = cli.command.flags();
    let mut cfg = RunConfig::load(flags)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(&cfg)?)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| commands::dispatch(&cli.command, &mut cfg, flags.check))?;

    let mut text = preamble(cli.command.name(), &cfg);
    text.push_str(&outcome.body);
    match &cfg.output {
        Some(path) => std::fs::write(path, &text)
            .map_err(|e| CliError::usage(format!("output {}: {e}", path.display())))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::usage(format!("stdout: {e}")))?;
        }
    }

    for c in &outcome.checks {
        eprintln!("check {}: {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    if outcome.attempted > 0 && outcome.aborted as f64 > MAX_ABORT_FRACTION * outcome.attempted as f64 {
        eprintln!(
            "error: {} of {} paths aborted, above the {}% limit",
            outcome.aborted,
            outcome.attempted,
            MAX_ABORT_FRACTION * 100.0
        );
        return Ok(EXIT_DIVERGENCE);
    }
    if flags.check && outcome.checks.iter().any(|c| !c.passed) {
        return Ok(EXIT_CHECK);
    }
    Ok(EXIT_OK)
}
