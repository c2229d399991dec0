//! Generation and embedding provider contracts, plus the deterministic
//! in-process providers: trace replay, feature-hashing embeddings, and a
//! scripted stub for tests.
//!
//! HTTP-backed providers live in the companion crate; everything here is
//! pure and deterministic so episodes can be replayed bit-for-bit.

mod hash_embed;
mod replay;
mod scripted;

pub use hash_embed::HashEmbedder;
pub use replay::ReplayBackend;
pub use scripted::{ProbeScript, ScriptedBackend, ScriptedStep};

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::redundancy::Embedding;
use crate::verification::TaskKind;

/// Errors crossing the backend boundary.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    /// The endpoint works but lacks something we need (for example
    /// per-token log-probabilities).
    #[error("endpoint capability missing: {field} ({hint})")]
    MissingCapability { field: String, hint: String },
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("malformed trace record: {0}")]
    Trace(String),
}

/// One streamed token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEvent {
    pub text: String,
    /// Log-probability of the sampled token; finite and <= 0.
    pub logprob: f64,
    /// Set on the event that terminates the thinking phase. Appears at
    /// most once per stream; its text is not reasoning content.
    pub is_end_of_thinking: bool,
}

impl TokenEvent {
    pub fn text(text: impl Into<String>, logprob: f64) -> Self {
        Self {
            text: text.into(),
            logprob,
            is_end_of_thinking: false,
        }
    }

    pub fn end_of_thinking() -> Self {
        Self {
            text: String::new(),
            logprob: 0.0,
            is_end_of_thinking: true,
        }
    }
}

/// A cancellable ordered token stream.
pub trait TokenStream {
    /// Next event; `None` once the stream is exhausted or cancelled.
    fn next_event(&mut self) -> Option<Result<TokenEvent, BackendError>>;

    /// Stop token production promptly. Subsequent `next_event` calls
    /// return `None`.
    fn cancel(&mut self);
}

/// One generated probe token, with optional scored alternatives (used for
/// multiple-choice confidence calibration).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeToken {
    pub text: String,
    pub logprob: f64,
    /// Alternatives considered at this position: `(token_text, logprob)`.
    pub top_choices: Vec<(String, f64)>,
}

impl ProbeToken {
    pub fn new(text: impl Into<String>, logprob: f64) -> Self {
        Self {
            text: text.into(),
            logprob,
            top_choices: Vec::new(),
        }
    }
}

/// Raw probe continuation returned by a backend.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeGeneration {
    pub tokens: Vec<ProbeToken>,
}

impl ProbeGeneration {
    pub fn text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(&t.text);
        }
        out
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

/// A trial-answer probe request. The main stream's context is never
/// mutated by a probe; each backend composes the pieces as its transport
/// requires, and the replay provider addresses recorded answers by
/// `step_index`.
#[derive(Debug, Clone, Copy)]
pub struct ProbeRequest<'a> {
    pub question: &'a str,
    /// Reasoning chain up to and including the current step.
    pub reasoning_prefix: &'a str,
    /// One-based index of the step being probed.
    pub step_index: usize,
    pub token_cap: usize,
    pub task: TaskKind,
    /// True for the single answer-producing probe that closes a
    /// full-reasoning episode at stream end.
    pub is_closing: bool,
}

/// Streaming generation provider.
pub trait GenerationBackend {
    /// Open the main reasoning stream for a question.
    fn stream(&self, question: &str) -> Result<Box<dyn TokenStream + '_>, BackendError>;

    /// Generate a short side continuation from a truncated prefix. Must
    /// not disturb the main stream.
    fn probe(&self, request: &ProbeRequest<'_>) -> Result<ProbeGeneration, BackendError>;
}

/// Step-embedding provider. Implementations must be deterministic within
/// a process run and return unit-normalized vectors.
pub trait EmbeddingBackend {
    fn embed(&self, text: &str) -> Result<Embedding, BackendError>;
    fn dim(&self) -> usize;
}

/// One recorded reasoning step of a trace.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceStep {
    pub text: String,
    pub token_count: usize,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub trial_answer: Option<String>,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub trial_confidence: Option<f64>,
}

/// A recorded full-reasoning trajectory, replayable for offline
/// experiments and analysis.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub id: String,
    pub question: String,
    pub task: TaskKind,
    pub steps: Vec<TraceStep>,
    pub final_answer: String,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub gold_answer: Option<String>,
    pub total_tokens: usize,
}

impl TraceRecord {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.steps.is_empty() {
            return Err(BackendError::Trace(alloc::format!(
                "trace {}: steps must be non-empty",
                self.id
            )));
        }
        let mut sum = 0usize;
        for (i, step) in self.steps.iter().enumerate() {
            if step.token_count == 0 {
                return Err(BackendError::Trace(alloc::format!(
                    "trace {}: step {} has zero token_count",
                    self.id,
                    i + 1
                )));
            }
            sum += step.token_count;
        }
        if self.total_tokens < sum {
            return Err(BackendError::Trace(alloc::format!(
                "trace {}: total_tokens {} below step sum {}",
                self.id,
                self.total_tokens,
                sum
            )));
        }
        Ok(())
    }

    /// Reasoning text as the stream replays it: step texts joined with
    /// blank lines.
    pub fn reasoning_text(&self) -> String {
        let mut out = String::new();
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&step.text);
        }
        out
    }

    /// Sum of recorded per-step token counts.
    pub fn reasoning_tokens(&self) -> usize {
        self.steps.iter().map(|s| s.token_count).sum()
    }
}

/// Filters a raw token stream for a configurable end-of-thinking
/// delimiter, holding back only as many tokens as could still begin a
/// match. Text before the delimiter passes through; the delimiter itself
/// is replaced by a flagged terminal event.
#[derive(Debug, Clone)]
pub struct EndOfThinkingScanner {
    delimiter: String,
    held: Vec<TokenEvent>,
    held_len: usize,
    done: bool,
}

pub const DEFAULT_END_OF_THINKING: &str = "</think>";

impl EndOfThinkingScanner {
    pub fn new(delimiter: impl Into<String>) -> Self {
        let delimiter = delimiter.into();
        assert!(!delimiter.is_empty(), "delimiter must be non-empty");
        Self {
            delimiter,
            held: Vec::new(),
            held_len: 0,
            done: false,
        }
    }

    pub fn saw_delimiter(&self) -> bool {
        self.done
    }

    /// Feed one raw token; returns the events safe to release.
    pub fn push(&mut self, text: &str, logprob: f64) -> Vec<TokenEvent> {
        if self.done {
            return Vec::new();
        }
        self.held.push(TokenEvent::text(text, logprob));
        self.held_len += text.len();

        let held_text: String = self.held.iter().map(|e| e.text.as_str()).collect();
        if let Some(pos) = held_text.find(&self.delimiter) {
            self.done = true;
            let mut out = Vec::new();
            let mut offset = 0usize;
            for ev in self.held.drain(..) {
                let end = offset + ev.text.len();
                if end <= pos {
                    out.push(ev);
                } else if offset < pos {
                    // Straddles the delimiter start: release the reasoning
                    // part, drop the delimiter bytes.
                    let keep = &ev.text[..pos - offset];
                    out.push(TokenEvent::text(keep, ev.logprob));
                }
                offset = end;
            }
            self.held_len = 0;
            out.push(TokenEvent::end_of_thinking());
            return out;
        }

        // Release tokens that can no longer take part in a future match.
        let mut out = Vec::new();
        while !self.held.is_empty() {
            let first_len = self.held[0].text.len();
            if self.held_len - first_len >= self.delimiter.len() - 1 {
                let ev = self.held.remove(0);
                self.held_len -= first_len;
                out.push(ev);
            } else {
                break;
            }
        }
        out
    }

    /// Natural end of the raw stream: everything held is reasoning text.
    pub fn flush(&mut self) -> Vec<TokenEvent> {
        self.held_len = 0;
        core::mem::take(&mut self.held)
    }
}
