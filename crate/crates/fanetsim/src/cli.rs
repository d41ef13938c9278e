//! Command-line front end: `run`, `validate`, and `metrics` subcommands.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 I/O error. The `run`
//! subcommand writes the trace, then re-reads the written file to compute the
//! summary, so `metrics --trace` on the same file reproduces `summary.json`
//! byte for byte.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use log::info;

use crate::metrics::{compute_summary, FlowFilter};
use crate::runner::run_simulation;
use crate::scenario::{load_scenario, ScenarioError};
use crate::trace::read_trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "fanetsim",
    version,
    about = "Deterministic discrete-event simulator for UAV ad-hoc pub/sub networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario, writing trace.jsonl and summary.json.
    Run {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (created if missing).
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check a scenario file and report every problem found.
    Validate {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Recompute a summary from a stored trace.
    Metrics {
        /// Trace JSONL file produced by `run`.
        #[arg(long)]
        trace: PathBuf,
        /// Restrict the flows block to one origin:subscriber:expr triple.
        #[arg(long)]
        flow: Option<String>,
        /// Analysis window in microseconds as start:end (half-open).
        #[arg(long)]
        window: Option<String>,
    },
}

/// Parses args, runs one subcommand, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
        } => cmd_run(&scenario, seed, &out),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Metrics {
            trace,
            flow,
            window,
        } => cmd_metrics(&trace, flow.as_deref(), window.as_deref()),
    }
}

/// Log level comes from FANETSIM_LOG (off|info|debug); logs go to stderr so
/// stdout stays machine-readable.
fn init_logging() {
    let spec = std::env::var("FANETSIM_LOG").unwrap_or_else(|_| "off".to_string());
    let _ = env_logger::Builder::new()
        .parse_filters(&spec)
        .format_timestamp(None)
        .try_init();
}

fn scenario_error_exit(e: &ScenarioError) -> i32 {
    match e {
        ScenarioError::Io { .. } => EXIT_IO,
        ScenarioError::Parse { .. } | ScenarioError::Invalid { .. } => EXIT_INVALID,
    }
}

fn cmd_run(scenario_path: &Path, seed_override: Option<u64>, out_dir: &Path) -> i32 {
    let loaded = match load_scenario(scenario_path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return scenario_error_exit(&e);
        }
    };
    let seed = seed_override.unwrap_or(loaded.scenario.seed);
    info!(
        "running {} ({} nodes, {} us) with seed {seed}",
        scenario_path.display(),
        loaded.scenario.nodes.len(),
        loaded.scenario.duration().as_us()
    );
    let trace_bytes = run_simulation(&loaded.scenario, &loaded.sha256, seed);

    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        return EXIT_IO;
    }
    let trace_path = out_dir.join("trace.jsonl");
    if let Err(e) = std::fs::write(&trace_path, &trace_bytes) {
        eprintln!("error: cannot write {}: {e}", trace_path.display());
        return EXIT_IO;
    }

    // Summarize from the file we just wrote, not from memory: the trace on
    // disk is the contract, and this catches any write/serialize mismatch.
    let (header, records) = match open_trace(&trace_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let summary = match compute_summary(&header, &records, None, None) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let summary_path = out_dir.join("summary.json");
    if let Err(e) = std::fs::write(&summary_path, summary.to_json_pretty()) {
        eprintln!("error: cannot write {}: {e}", summary_path.display());
        return EXIT_IO;
    }
    println!("trace: {}", trace_path.display());
    println!("summary: {}", summary_path.display());
    EXIT_OK
}

fn cmd_validate(scenario_path: &Path) -> i32 {
    match load_scenario(scenario_path) {
        Ok(loaded) => {
            println!(
                "valid: {} node(s), {} us, sha256 {}",
                loaded.scenario.nodes.len(),
                loaded.scenario.duration().as_us(),
                loaded.sha256
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            scenario_error_exit(&e)
        }
    }
}

fn cmd_metrics(trace_path: &Path, flow: Option<&str>, window: Option<&str>) -> i32 {
    let filter = match flow.map(FlowFilter::parse).transpose() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let window = match window.map(parse_window).transpose() {
        Ok(w) => w,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_INVALID;
        }
    };
    let (header, records) = match open_trace(trace_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    match compute_summary(&header, &records, window, filter.as_ref()) {
        Ok(summary) => {
            print!("{}", summary.to_json_pretty());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn parse_window(spec: &str) -> Result<(u64, u64), String> {
    let parse_part = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| format!("bad window \"{spec}\": expected start:end in microseconds"))
    };
    match spec.split_once(':') {
        Some((a, b)) => Ok((parse_part(a)?, parse_part(b)?)),
        None => Err(format!(
            "bad window \"{spec}\": expected start:end in microseconds"
        )),
    }
}

fn open_trace(
    path: &Path,
) -> Result<(crate::trace::TraceHeader, Vec<crate::trace::TraceRecord>), i32> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot open {}: {e}", path.display());
            return Err(EXIT_IO);
        }
    };
    match read_trace(BufReader::new(file)) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
            eprintln!("error: {}: {e}", path.display());
            Err(EXIT_INVALID)
        }
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            Err(EXIT_IO)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_spec_parses() {
        assert_eq!(parse_window("0:1000000"), Ok((0, 1_000_000)));
        assert!(parse_window("17").is_err());
        assert!(parse_window("a:b").is_err());
        assert!(parse_window("5:").is_err());
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(main_with(["fanetsim", "--help"]), EXIT_OK);
        assert_eq!(main_with(["fanetsim", "--version"]), EXIT_OK);
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(main_with(["fanetsim", "frobnicate"]), EXIT_INVALID);
    }

    #[test]
    fn missing_scenario_file_is_io_error() {
        assert_eq!(
            main_with(["fanetsim", "validate", "--scenario", "/nonexistent/x.json"]),
            EXIT_IO
        );
    }
}
