//! JSONL input/output: trace and episode record streams, the provenance
//! header carried by every output file, and replay summaries.
//!
//! Every output file starts with a `{"header": ...}` line echoing the
//! resolved configuration and input digests, followed by one record per
//! line, and (for replay) a trailing `{"summary": ...}` line. Outputs
//! contain no timestamps, so identical inputs and configs produce
//! byte-identical files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use puma_core::backends::TraceRecord;
use puma_core::controller::EpisodeResult;
use serde::{Deserialize, Serialize};

use crate::config::ResolvedConfig;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Line {
        path: String,
        line: usize,
        message: String,
    },
}

/// FNV-1a digest of a file's bytes, as stable input provenance.
pub fn file_digest(path: &Path) -> Result<String, IoError> {
    let bytes = fs::read(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("fnv1a64:{h:016x}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub digest: String,
}

/// First line of every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHeader {
    pub config: ResolvedConfig,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine {
    header: OutputHeader,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryLine<T> {
    summary: T,
}

/// Exit-kind composition plus corpus aggregates for a replay run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub episodes: usize,
    /// Per-item failures (malformed lines, invalid traces, backend errors).
    pub errors: usize,
    /// Fraction of episodes whose final answer matches the gold answer,
    /// over traces that carry one.
    pub accuracy: Option<f64>,
    /// Mean per-trace reduction of episode total tokens against the
    /// trace's recorded total.
    pub mean_token_reduction: Option<f64>,
    pub verified_exits: usize,
    pub loop_breaker_exits: usize,
    pub full_reasoning: usize,
    /// Episodes that ended on a safety cap (counted under full reasoning).
    pub safety_capped: usize,
}

/// Writes header-first JSONL with stable field order.
pub struct JsonlWriter<W: Write> {
    out: W,
    path: String,
}

impl JsonlWriter<std::io::BufWriter<fs::File>> {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        let file = fs::File::create(path).map_err(|source| IoError::Write {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self {
            out: std::io::BufWriter::new(file),
            path: path.display().to_string(),
        })
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn from_writer(out: W, label: &str) -> Self {
        Self {
            out,
            path: label.to_string(),
        }
    }

    fn write_value<T: Serialize>(&mut self, value: &T) -> Result<(), IoError> {
        let line = serde_json::to_string(value).map_err(|e| IoError::Line {
            path: self.path.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(self.out, "{line}").map_err(|source| IoError::Write {
            path: self.path.clone(),
            source,
        })
    }

    pub fn header(&mut self, header: &OutputHeader) -> Result<(), IoError> {
        self.write_value(&HeaderLine {
            header: header.clone(),
        })
    }

    pub fn record<T: Serialize>(&mut self, record: &T) -> Result<(), IoError> {
        self.write_value(record)
    }

    pub fn summary<T: Serialize>(&mut self, summary: &T) -> Result<(), IoError> {
        self.write_value(&SummaryLine { summary })
    }

    pub fn finish(mut self) -> Result<(), IoError> {
        self.out.flush().map_err(|source| IoError::Write {
            path: self.path.clone(),
            source,
        })
    }
}

/// One parsed line of a record stream.
pub enum JsonlLine<T> {
    Record(T),
    /// Header or summary envelope; carried through for round-trips.
    Envelope,
}

fn classify_line<T: serde::de::DeserializeOwned>(text: &str) -> Result<JsonlLine<T>, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if let Some(obj) = value.as_object() {
        if obj.len() == 1 && (obj.contains_key("header") || obj.contains_key("summary")) {
            return Ok(JsonlLine::Envelope);
        }
    }
    serde_json::from_value(value)
        .map(JsonlLine::Record)
        .map_err(|e| e.to_string())
}

/// Read a JSONL record stream, skipping header/summary envelopes and
/// collecting per-line errors instead of failing the whole file.
pub fn read_records<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<(Vec<T>, Vec<IoError>), IoError> {
    let file = fs::File::open(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IoError::Open {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match classify_line::<T>(&line) {
            Ok(JsonlLine::Record(r)) => records.push(r),
            Ok(JsonlLine::Envelope) => {}
            Err(message) => errors.push(IoError::Line {
                path: path.display().to_string(),
                line: idx + 1,
                message,
            }),
        }
    }
    Ok((records, errors))
}

/// Read traces, additionally validating each record's structural
/// invariants; invalid traces become per-line errors.
pub fn read_traces(path: &Path) -> Result<(Vec<TraceRecord>, Vec<IoError>), IoError> {
    let (raw, mut errors) = read_records::<TraceRecord>(path)?;
    let mut traces = Vec::with_capacity(raw.len());
    for (i, trace) in raw.into_iter().enumerate() {
        match trace.validate() {
            Ok(()) => traces.push(trace),
            Err(e) => errors.push(IoError::Line {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok((traces, errors))
}

pub fn read_episodes(path: &Path) -> Result<(Vec<EpisodeResult>, Vec<IoError>), IoError> {
    read_records::<EpisodeResult>(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use puma_core::synthetic::demo_trace;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("puma-jsonl-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn trace_round_trip_with_header() {
        let path = tmp("roundtrip.jsonl");
        let trace = demo_trace("demo-1");
        {
            let mut w = JsonlWriter::create(&path).unwrap();
            let header = OutputHeader {
                config: ResolvedConfig::default(),
                inputs: vec![],
            };
            w.header(&header).unwrap();
            w.record(&trace).unwrap();
            w.summary(&serde_json::json!({"episodes": 1})).unwrap();
            w.finish().unwrap();
        }
        let (traces, errors) = read_traces(&path).unwrap();
        assert!(errors.is_empty(), "{errors:?}");
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0], trace);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn malformed_line_is_counted_not_fatal() {
        let path = tmp("malformed.jsonl");
        let good = serde_json::to_string(&demo_trace("ok")).unwrap();
        std::fs::write(&path, format!("{good}\nnot json at all\n{good}\n")).unwrap();
        let (traces, errors) = read_traces(&path).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(errors.len(), 1);
        assert!(
            errors[0].to_string().contains(":2:"),
            "line number named: {}",
            errors[0]
        );
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn digest_is_stable() {
        let path = tmp("digest.jsonl");
        std::fs::write(&path, b"hello\n").unwrap();
        let a = file_digest(&path).unwrap();
        let b = file_digest(&path).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("fnv1a64:"));
        std::fs::remove_file(path).ok();
    }
}
