//! Transcript audits: leakage count, pad reuse, and deterministic replay.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use synforge_core::cascade::{digest_hex, DuplicatePad, Transcript};
use synforge_core::pipeline::{run_session, RunReport};

use crate::{CliError, EXIT_AUDIT, EXIT_OK, REPORT_FILE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Check {
    Pass,
    Fail(String),
    Skipped(String),
}

impl Check {
    fn failed(&self) -> bool {
        matches!(self, Check::Fail(_))
    }

    fn describe(&self) -> String {
        match self {
            Check::Pass => "ok".into(),
            Check::Fail(m) => format!("FAIL: {m}"),
            Check::Skipped(m) => format!("skipped ({m})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub entries: usize,
    pub s: usize,
    pub duplicates: Vec<DuplicatePad>,
    pub leakage_vs_report: Check,
    pub digest: Check,
    pub replay: Check,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.duplicates.is_empty()
            && !self.leakage_vs_report.failed()
            && !self.digest.failed()
            && !self.replay.failed()
    }
}

/// Audits transcript text, optionally against the report of its run. The
/// digest is taken over the text exactly as given.
pub fn audit_text(text: &str, report: Option<&RunReport>) -> Result<AuditReport, CliError> {
    let transcript =
        Transcript::from_jsonl(text).map_err(|e| CliError::usage(format!("transcript {e}")))?;
    Ok(audit(&transcript, &digest_hex(text.as_bytes()), report))
}

/// Same checks on a transcript already in memory.
pub fn audit_transcript(transcript: &Transcript, report: Option<&RunReport>) -> AuditReport {
    audit(transcript, &transcript.digest(), report)
}

fn audit(transcript: &Transcript, digest: &str, report: Option<&RunReport>) -> AuditReport {
    let s = transcript.leakage();
    let duplicates = transcript.duplicate_pad_indices();
    let skip = || Check::Skipped("no report".into());
    let (leakage_vs_report, digest, replay) = match report {
        None => (skip(), skip(), skip()),
        Some(r) => {
            let leak = if r.ledger.s == s && r.pad.consumed == s {
                Check::Pass
            } else {
                Check::Fail(format!("transcript spends {s} pad bits, report says {}", r.ledger.s))
            };
            let digest = if digest == r.transcript_digest {
                Check::Pass
            } else {
                Check::Fail("transcript digest differs from report".into())
            };
            let replay = match run_session(&r.config) {
                Ok(out) if &out.transcript == transcript => Check::Pass,
                Ok(out) => Check::Fail(format!(
                    "replay produced {} entries that differ from the file",
                    out.transcript.len()
                )),
                Err(e) => Check::Fail(format!("replay failed: {e}")),
            };
            (leak, digest, replay)
        }
    };
    AuditReport {
        entries: transcript.len(),
        s,
        duplicates,
        leakage_vs_report,
        digest,
        replay,
    }
}

fn load_report(path: &Path) -> Result<RunReport, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn cmd_audit(path: &Path, report: Option<&Path>, out: &mut dyn Write) -> Result<u8, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let report_path: Option<PathBuf> = match report {
        Some(p) => Some(p.to_owned()),
        None => path
            .parent()
            .map(|d| d.join(REPORT_FILE))
            .filter(|p| p.is_file()),
    };
    let run_report = report_path.as_deref().map(load_report).transpose()?;
    let audit = audit_text(&text, run_report.as_ref())?;

    writeln!(out, "{:<16} {}", "entries", audit.entries)?;
    writeln!(out, "{:<16} {}", "s", audit.s)?;
    if audit.duplicates.is_empty() {
        writeln!(out, "{:<16} ok", "pad reuse")?;
    } else {
        writeln!(out, "{:<16} FAIL: {} reused pad bits", "pad reuse", audit.duplicates.len())?;
        for d in &audit.duplicates {
            let lines: Vec<String> = d.entries.iter().map(|e| (e + 1).to_string()).collect();
            writeln!(out, "  pad index {} on lines {}", d.pad_index, lines.join(", "))?;
        }
    }
    writeln!(out, "{:<16} {}", "s vs report", audit.leakage_vs_report.describe())?;
    writeln!(out, "{:<16} {}", "digest", audit.digest.describe())?;
    writeln!(out, "{:<16} {}", "replay", audit.replay.describe())?;
    Ok(if audit.passed() { EXIT_OK } else { EXIT_AUDIT })
}
