//! Command implementations behind the `synforge` binary.
//!
//! Each command writes human-readable output to the given writer and
//! returns the process exit code: 0 success, 1 usage or parse error,
//! 2 protocol abort, 3 audit failure.

pub mod analyze;
pub mod audit;
pub mod config;
pub mod sweep;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use synforge_core::csscode::{one_way_rate, rate_threshold};
use synforge_core::pipeline::{analysis_operators, run_session, RunReport, SessionOutput};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_ABORT: u8 = 2;
pub const EXIT_AUDIT: u8 = 3;

pub const REPORT_FILE: &str = "report.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const OPERATORS_FILE: &str = "operators.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "synforge", version, about = "QKD post-processing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one session and write report.json and transcript.jsonl.
    Run {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the Z/X operator set of the run for `analyze`.
        #[arg(long)]
        emit_operators: bool,
    },
    /// Run sessions over a QBER grid and print CSV.
    Sweep {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// Grid as LO:HI:STEP, inclusive of HI.
        #[arg(long)]
        qber: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Write CSV here instead of stdout.
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
    /// Solve 1 - 2 H(p) = 0 by bisection.
    Threshold {
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Classify Pauli operators and find the non-commuting set.
    Analyze {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check a transcript for pad reuse, leakage, and replay.
    Audit {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
        /// Report to check against; defaults to report.json beside the file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<u8, CliError> {
    match cli.command {
        Command::Run {
            config,
            out: dir,
            seed,
            emit_operators,
        } => cmd_run(&config, &dir, seed, emit_operators, out),
        Command::Sweep {
            config,
            qber,
            seeds,
            out: path,
        } => sweep::cmd_sweep(&config, &qber, seeds, path.as_deref(), out),
        Command::Threshold { tol } => cmd_threshold(tol, out),
        Command::Analyze { file, json } => analyze::cmd_analyze(&file, json, out),
        Command::Audit { file, report } => audit::cmd_audit(&file, report.as_deref(), out),
    }
}

pub fn report_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_session(dir: &Path, output: &SessionOutput) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    fs::write(dir.join(REPORT_FILE), report_json(&output.report))?;
    fs::write(dir.join(TRANSCRIPT_FILE), output.transcript.to_jsonl())?;
    Ok(())
}

pub fn cmd_run(
    config: &Path,
    dir: &Path,
    seed: Option<u64>,
    emit_operators: bool,
    out: &mut dyn Write,
) -> Result<u8, CliError> {
    let mut cfg = config::load(config)?;
    config::resolve_seed(&mut cfg, seed)?;
    let output = run_session(&cfg).map_err(|e| CliError::usage(e.to_string()))?;
    write_session(dir, &output)?;
    if emit_operators {
        if let Some(hash) = &output.hash {
            let set = analysis_operators(&output.transcript, hash);
            let mut text = String::new();
            for op in set.ops() {
                text.push_str(&op.to_string());
                text.push('\n');
            }
            fs::write(dir.join(OPERATORS_FILE), text)?;
        }
    }
    let r = &output.report;
    let fmt_rate = |p: Option<f64>| p.map_or("-".to_owned(), |p| format!("{p:.4}"));
    writeln!(out, "{:<12} {}", "seed", cfg.seed)?;
    writeln!(out, "{:<12} {}", "p_z", fmt_rate(r.estimates.p_z))?;
    writeln!(out, "{:<12} {}", "p_x", fmt_rate(r.estimates.p_x))?;
    writeln!(out, "{:<12} {:.4}", "epsilon", r.estimates.epsilon)?;
    writeln!(out, "{:<12} {}", "n", r.ledger.n)?;
    writeln!(out, "{:<12} {}", "s", r.ledger.s)?;
    writeln!(out, "{:<12} {}", "t", r.ledger.t)?;
    writeln!(out, "{:<12} {}", "gross", r.ledger.gross)?;
    writeln!(out, "{:<12} {}", "net", r.ledger.net)?;
    writeln!(out, "{:<12} {}", "keys_equal", r.keys_equal)?;
    match &r.abort {
        Some(a) => {
            writeln!(out, "{:<12} {} ({})", "aborted", a.stage, a.reason)?;
            Ok(EXIT_ABORT)
        }
        None => Ok(EXIT_OK),
    }
}

pub fn cmd_threshold(tol: f64, out: &mut dyn Write) -> Result<u8, CliError> {
    if !(tol > 0.0 && tol < 0.5) {
        return Err(CliError::usage(format!("tolerance {tol} outside (0, 0.5)")));
    }
    let t = rate_threshold(tol);
    writeln!(out, "{:<12} {:.6}", "p*", t.root)?;
    writeln!(out, "{:<12} {:.2e}", "rate(p*)", one_way_rate(t.root))?;
    writeln!(out, "{:<12} {}", "iterations", t.iterations)?;
    writeln!(out, "{:<12} {:e}", "tolerance", t.tolerance)?;
    Ok(EXIT_OK)
}
