//! Analysis report documents and plot-ready CSV sidecars.
//!
//! Each analysis writes one self-describing JSON document (resolved config
//! and input digests included) plus a CSV with the numbers a plot needs.

use std::io::Write;
use std::path::{Path, PathBuf};

use puma_core::analyzer::{SignalParameter, SweepPoint};
use serde::Serialize;

use crate::jsonl::{IoError, OutputHeader};

/// A report document: provenance header plus the analysis payload.
#[derive(Debug, Clone, Serialize)]
pub struct ReportDoc<T: Serialize> {
    pub header: OutputHeader,
    pub report: T,
}

pub fn write_report<T: Serialize>(path: &Path, doc: &ReportDoc<T>) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| IoError::Line {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Sidecar CSV path: the report path with its extension replaced by `csv`.
pub fn csv_sidecar(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = std::io::BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(out, "{header}")?;
        for row in rows {
            writeln!(out, "{row}")?;
        }
        out.flush()
    })()
    .map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn sweep_csv_rows(signal: &str, points: &[SweepPoint]) -> Vec<String> {
    points
        .iter()
        .map(|p| {
            let parameter = match p.parameter {
                SignalParameter::Lambda(l) => format!("{l}"),
                SignalParameter::ConsecutiveCount(k) => format!("{k}"),
            };
            format!(
                "{signal},{parameter},{:.6},{:.6},{}",
                p.failure_rate, p.token_reduction, p.triggered_count
            )
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "signal,parameter,failure_rate,token_reduction,triggered";

pub fn cdf_csv_rows(sorted_positions: &[f64]) -> Vec<String> {
    let n = sorted_positions.len();
    sorted_positions
        .iter()
        .enumerate()
        .map(|(i, pos)| format!("{pos:.6},{:.6}", (i + 1) as f64 / n as f64))
        .collect()
}

pub const CDF_CSV_HEADER: &str = "position_fraction,cumulative_fraction";
