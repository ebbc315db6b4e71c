//! `twistkam` — run one twist-map experiment described by a TOML config.
//!
//! Exit codes: 0 success, 2 invalid config, 3 solver non-convergence,
//! 4 property audit failed.

mod config;
mod report;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use twistkam_core::CoreError;

use config::ExperimentConfig;
use report::{OutputSink, RunReport};

#[derive(Debug)]
pub enum CliError {
    /// The config could not be parsed or is inconsistent (exit 2).
    Config(String),
    /// A solver gave up before reaching tolerance (exit 3).
    Solver(String),
    /// A mathematical property the run depends on does not hold (exit 4).
    Audit(String),
}

impl CliError {
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::UnknownFamily(_)
            | CoreError::InvalidFamily(_)
            | CoreError::GridMismatch
            | CoreError::InvalidInput(_) => CliError::Config(e.to_string()),
            CoreError::NoConvergence { .. } | CoreError::NotTransverse { .. } => {
                CliError::Solver(e.to_string())
            }
            CoreError::AuditFailed(_)
            | CoreError::SaddleDetected { .. }
            | CoreError::NotLagrangian { .. }
            | CoreError::NotInAubry { .. }
            | CoreError::AmbiguousPartner { .. } => CliError::Audit(e.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Audit(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Solver(m) | CliError::Audit(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "twistkam", about = "Twist maps on the torus via generating functions")]
struct Args {
    /// Path to the experiment TOML config.
    config: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return ExitCode::from(e.exit_code());
        }
    };
    let mut sink = match OutputSink::new(&cfg.output.dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return ExitCode::from(e.exit_code());
        }
    };
    let start = Instant::now();
    let outcome = runner::run(&cfg, &mut sink);
    let wall_time_ms = start.elapsed().as_millis();
    match outcome {
        Ok(out) => {
            let report = RunReport {
                command: cfg.command.clone(),
                seed: cfg.seed,
                wall_time_ms,
                checks: out.checks,
                files: std::mem::take(&mut sink.files),
            };
            if let Err(e) = sink.finish(&report) {
                eprintln!("error: {}", e.message());
                return ExitCode::from(e.exit_code());
            }
            for c in &report.checks {
                let tag = if c.passed { "pass" } else { "fail" };
                println!("{}: {tag} ({})", c.name, c.value);
            }
            for f in &report.files {
                println!("wrote {} ({})", f.path, &f.sha256[..12]);
            }
            match out.failure {
                None => ExitCode::SUCCESS,
                Some(msg) => {
                    eprintln!("audit failed: {msg}");
                    ExitCode::from(4)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
