//! Parallel sessions over a QBER grid.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use synforge_core::pipeline::{run_session, ChannelSpec, SessionConfig, SweepRow};

use crate::{config, CliError, EXIT_OK};

/// Parses `LO:HI:STEP` into grid points `LO, LO+STEP, ...` not exceeding
/// `HI` (up to rounding). Every point must lie in `(0, 0.5)`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(CliError::usage(format!("grid {spec:?} is not LO:HI:STEP")));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::usage(format!("grid value {s:?} is not a number")))
    };
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::usage("grid step must be positive".to_owned()));
    }
    if hi < lo {
        return Err(CliError::usage(format!("empty grid {spec:?}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let points: Vec<f64> = (0..count)
        .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
        .collect();
    if let Some(p) = points.iter().find(|p| !(**p > 0.0 && **p < 0.5)) {
        return Err(CliError::usage(format!("grid point {p} outside (0, 0.5)")));
    }
    Ok(points)
}

/// Runs every `(qber, seed)` pair. Seeds are `base, base+1, ...`; rows come
/// back in grid order regardless of scheduling.
pub fn sweep_rows(base: &SessionConfig, grid: &[f64], seeds: u64) -> Result<Vec<SweepRow>, CliError> {
    let jobs: Vec<(f64, u64)> = grid
        .iter()
        .flat_map(|&q| (0..seeds).map(move |k| (q, base.seed.wrapping_add(k))))
        .collect();
    jobs.par_iter()
        .map(|&(qber, seed)| {
            let mut cfg = base.clone();
            cfg.channel = ChannelSpec::Qber { qber };
            cfg.seed = seed;
            run_session(&cfg)
                .map(|o| SweepRow::from_report(qber, &o.report))
                .map_err(|e| CliError::usage(e.to_string()))
        })
        .collect()
}

pub fn cmd_sweep(
    config_path: &Path,
    grid: &str,
    seeds: u64,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<u8, CliError> {
    let grid = parse_grid(grid)?;
    if seeds == 0 {
        return Err(CliError::usage("--seeds must be at least 1"));
    }
    let mut cfg = config::load(config_path)?;
    config::resolve_seed(&mut cfg, None)?;
    let rows = sweep_rows(&cfg, &grid, seeds)?;
    let mut csv = String::from(SweepRow::HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    match out_path {
        Some(p) => fs::write(p, csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(EXIT_OK)
}
