//! Configuration loading: documented flat key set, file < override
//! precedence, range validation, and the resolved echo embedded in every
//! output header.
//!
//! The file format is deliberately plain: one `key = value` per line, `#`
//! comments, no sections. The same keys are accepted by repeated
//! `--set KEY=VALUE` flags, which win over the file, which wins over the
//! defaults.

use std::fmt::Write as _;
use std::path::Path;

use puma_core::controller::PumaConfig;
use puma_core::verification::TaskKind;
use serde::{Deserialize, Serialize};

/// Generation-endpoint sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub top_p: f64,
    /// Delimiter that terminates the thinking phase on the raw stream.
    pub end_of_thinking: String,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            top_p: 0.95,
            end_of_thinking: "</think>".to_string(),
        }
    }
}

/// Embedding-side settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSettings {
    /// Vector dimension for the local hashing embedder; remote embedders
    /// learn their dimension from the first response.
    pub dim: usize,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self { dim: 128 }
    }
}

/// Fully resolved run configuration, echoed into output headers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub puma: PumaConfig,
    pub generation: GenerationSettings,
    pub embedding: EmbeddingSettings,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line} is not `key = value`: {text:?}")]
    BadLine { line: usize, text: String },
    #[error("unknown config key {key:?} (known keys: {known})")]
    UnknownKey { key: String, known: String },
    #[error("invalid value for {key}: {value:?} ({reason})")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("configuration out of range: {0}")]
    OutOfRange(String),
}

const KNOWN_KEYS: &[&str] = &[
    "task",
    "l_min",
    "l_max",
    "tau_sim",
    "k",
    "lambda",
    "epsilon",
    "window_len",
    "probe_token_cap",
    "mc_temperature",
    "code_match_threshold",
    "loop.min_steps",
    "loop.m",
    "loop.gate",
    "max_steps",
    "max_total_tokens",
    "temperature",
    "top_p",
    "end_of_thinking",
    "embed_dim",
];

fn known_keys_list() -> String {
    let mut s = String::new();
    for (i, k) in KNOWN_KEYS.iter().enumerate() {
        if i > 0 {
            let _ = write!(s, ", ");
        }
        let _ = write!(s, "{k}");
    }
    s
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: "expected a non-negative integer".to_string(),
    })
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: "expected a number".to_string(),
    })
}

pub fn parse_task(value: &str) -> Option<TaskKind> {
    match value.trim().to_ascii_lowercase().as_str() {
        "math" => Some(TaskKind::Math),
        "mc" | "multiple_choice" | "multiplechoice" => Some(TaskKind::MultipleChoice),
        "code" => Some(TaskKind::Code),
        _ => None,
    }
}

/// Applies one key/value pair onto the config under construction.
struct Builder {
    resolved: ResolvedConfig,
    /// Probe cap default is task dependent; only apply it when the key was
    /// never set explicitly.
    probe_cap_explicit: bool,
}

impl Builder {
    fn new() -> Self {
        Self {
            resolved: ResolvedConfig::default(),
            probe_cap_explicit: false,
        }
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.resolved.puma;
        match key {
            "task" => {
                p.task = parse_task(value).ok_or_else(|| ConfigError::InvalidValue {
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: "expected math, mc, or code".to_string(),
                })?;
            }
            "l_min" => p.segmenter.l_min = parse_usize(key, value)?,
            "l_max" => p.segmenter.l_max = parse_usize(key, value)?,
            "tau_sim" => p.redundancy.tau_sim = parse_f64(key, value)?,
            "k" => p.redundancy.k = parse_usize(key, value)?,
            "lambda" => p.verification.lambda = parse_f64(key, value)?,
            "epsilon" => p.verification.epsilon = parse_f64(key, value)?,
            "window_len" => p.verification.window_len = parse_usize(key, value)?,
            "probe_token_cap" => {
                p.verification.probe_token_cap = parse_usize(key, value)?;
                self.probe_cap_explicit = true;
            }
            "mc_temperature" => p.verification.mc_temperature = parse_f64(key, value)?,
            "code_match_threshold" => p.verification.code_match_threshold = parse_f64(key, value)?,
            "loop.min_steps" => p.loop_breaker.min_steps = parse_usize(key, value)?,
            "loop.m" => {
                let v = value.trim().to_ascii_lowercase();
                p.loop_breaker.m = if v == "off" || v == "none" || v.is_empty() {
                    None
                } else {
                    Some(parse_usize(key, value)?)
                };
            }
            "loop.gate" => p.loop_breaker.min_confidence_gate = parse_f64(key, value)?,
            "max_steps" => p.max_steps = parse_usize(key, value)?,
            "max_total_tokens" => p.max_total_tokens = parse_usize(key, value)?,
            "temperature" => self.resolved.generation.temperature = parse_f64(key, value)?,
            "top_p" => self.resolved.generation.top_p = parse_f64(key, value)?,
            "end_of_thinking" => {
                self.resolved.generation.end_of_thinking = value.trim().to_string()
            }
            "embed_dim" => self.resolved.embedding.dim = parse_usize(key, value)?,
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                    known: known_keys_list(),
                });
            }
        }
        Ok(())
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // negation also rejects NaN
    fn finish(mut self) -> Result<ResolvedConfig, ConfigError> {
        if !self.probe_cap_explicit {
            self.resolved.puma.verification.probe_token_cap = match self.resolved.puma.task {
                TaskKind::Code => 50,
                _ => 30,
            };
        }
        self.resolved
            .puma
            .validate()
            .map_err(ConfigError::OutOfRange)?;
        let g = &self.resolved.generation;
        if !(g.temperature > 0.0) {
            return Err(ConfigError::OutOfRange(format!(
                "temperature must be positive, got {}",
                g.temperature
            )));
        }
        if !(g.top_p > 0.0 && g.top_p <= 1.0) {
            return Err(ConfigError::OutOfRange(format!(
                "top_p must lie in (0, 1], got {}",
                g.top_p
            )));
        }
        if g.end_of_thinking.is_empty() {
            return Err(ConfigError::OutOfRange(
                "end_of_thinking must be non-empty".to_string(),
            ));
        }
        if self.resolved.embedding.dim < 8 {
            return Err(ConfigError::OutOfRange(format!(
                "embed_dim must be >= 8, got {}",
                self.resolved.embedding.dim
            )));
        }
        Ok(self.resolved)
    }
}

/// Parse `KEY=VALUE` as used by `--set`.
pub fn parse_override(raw: &str) -> Result<(String, String), ConfigError> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ConfigError::BadLine {
            line: 0,
            text: raw.to_string(),
        }),
    }
}

/// Load configuration: defaults, then the file (when given), then overrides.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ResolvedConfig, ConfigError> {
    let mut builder = Builder::new();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine {
                    line: lineno + 1,
                    text: raw.to_string(),
                });
            };
            builder.apply(key.trim(), value.trim())?;
        }
    }
    for (key, value) in overrides {
        builder.apply(key, value)?;
    }
    builder.finish()
}
