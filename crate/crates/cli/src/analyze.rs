//! Stabilizer analysis of an operator file.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use synforge_core::pauli::{
    find_noncommuting_set, is_symmetric_protocol_valid, NoncommutingSet, PauliError, StabilizerSet,
    SymmetryReport,
};

use crate::{CliError, EXIT_OK};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnalysisReport {
    #[serde(flatten)]
    pub symmetry: SymmetryReport,
    pub noncommuting: NoncommutingSet,
    pub r: Option<usize>,
}

/// One Pauli string per line (`I`, `X`, `Y`, `Z`); `#` starts a comment.
pub fn analyze_text(text: &str) -> Result<AnalysisReport, CliError> {
    let set = StabilizerSet::parse_lines(text).map_err(|e| CliError::usage(e.to_string()))?;
    analyze_set(&set)
}

pub fn analyze_set(set: &StabilizerSet) -> Result<AnalysisReport, CliError> {
    let symmetry = is_symmetric_protocol_valid(set);
    let noncommuting = find_noncommuting_set(set).map_err(|e| match e {
        PauliError::NotCssLike { index, op } => {
            CliError::usage(format!("operator {index} ({op}) is neither Z-type nor X-type"))
        }
        other => CliError::usage(other.to_string()),
    })?;
    Ok(AnalysisReport {
        r: noncommuting.r(),
        symmetry,
        noncommuting,
    })
}

fn abbreviate(op: &str) -> String {
    const WIDTH: usize = 32;
    if op.len() <= WIDTH {
        op.to_owned()
    } else {
        format!("{}...", &op[..WIDTH - 3])
    }
}

pub fn cmd_analyze(path: &Path, json: bool, out: &mut dyn Write) -> Result<u8, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let report = analyze_text(&text)?;
    if json {
        serde_json::to_writer_pretty(&mut *out, &report).map_err(|e| CliError::usage(e.to_string()))?;
        writeln!(out)?;
        return Ok(EXIT_OK);
    }
    writeln!(out, "{:>5}  {:<32}  {:<8}  weight", "index", "operator", "type")?;
    for o in &report.symmetry.operators {
        let weight = o.op.bytes().filter(|&b| b != b'I').count();
        let kind = serde_json::to_value(o.css_type).ok();
        let kind = kind.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
        writeln!(out, "{:>5}  {:<32}  {:<8}  {weight}", o.index, abbreviate(&o.op), kind)?;
    }
    writeln!(out, "anticommuting pairs: {}", report.symmetry.edges.len())?;
    for (i, j) in report.symmetry.edges.iter().take(20) {
        writeln!(out, "  {i} -- {j}")?;
    }
    if report.symmetry.edges.len() > 20 {
        writeln!(out, "  ...")?;
    }
    match &report.noncommuting {
        NoncommutingSet::Found { members, exact } => {
            let list: Vec<String> = members.iter().map(usize::to_string).collect();
            writeln!(out, "R = {{{}}}", list.join(", "))?;
            writeln!(out, "r = {}{}", members.len(), if *exact { "" } else { " (greedy)" })?;
        }
        NoncommutingSet::Infeasible { blocking_edge } => {
            writeln!(
                out,
                "no Z-type deletion restores commutation: {} -- {} has no Z-type end",
                blocking_edge.0, blocking_edge.1
            )?;
        }
    }
    Ok(EXIT_OK)
}
