//! HTTP providers for chat-completions-style generation endpoints (with
//! streamed server-sent events and per-token log-probabilities) and
//! single-text embedding endpoints.
//!
//! Probes are separate non-streaming requests; the main stream is simply
//! not read while a probe is in flight, so probe traffic can never disturb
//! stream state. Embedding responses are cached per text so repeated
//! scoring of identical steps costs one call.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use puma_core::backends::{
    BackendError, EmbeddingBackend, EndOfThinkingScanner, GenerationBackend, ProbeGeneration,
    ProbeRequest, ProbeToken, TokenEvent, TokenStream,
};
use puma_core::redundancy::Embedding;
use puma_core::verification::build_probe_prompt;
use serde::Deserialize;
use serde_json::json;

use crate::config::GenerationSettings;

/// Where an HTTP provider lives.
#[derive(Debug, Clone)]
pub struct EndpointConfig {
    /// Base URL up to but excluding `/chat/completions` or `/embeddings`.
    pub base_url: String,
    pub model: String,
    /// Bearer token, never taken from the command line.
    pub api_key: Option<String>,
}

impl EndpointConfig {
    /// Read endpoint settings from `{prefix}_BASE_URL`, `{prefix}_MODEL`,
    /// `{prefix}_API_KEY`.
    pub fn from_env(prefix: &str) -> Option<Self> {
        let base_url = std::env::var(format!("{prefix}_BASE_URL")).ok()?;
        let model =
            std::env::var(format!("{prefix}_MODEL")).unwrap_or_else(|_| "default".to_string());
        let api_key = std::env::var(format!("{prefix}_API_KEY")).ok();
        Some(Self {
            base_url,
            model,
            api_key,
        })
    }
}

/// Wall-clock accounting for provider calls.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CallMetrics {
    pub calls: usize,
    pub total_duration: Duration,
}

fn agent() -> ureq::Agent {
    ureq::Agent::new_with_config(
        ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build(),
    )
}

fn transport(err: ureq::Error) -> BackendError {
    BackendError::Transport(err.to_string())
}

fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
) -> Result<ureq::http::Response<ureq::Body>, BackendError> {
    let mut req = agent.post(url);
    if let Some(key) = api_key {
        req = req.header("authorization", format!("Bearer {key}"));
    }
    req.send_json(body).map_err(transport)
}

// Chat-completions wire shapes; unknown fields are ignored everywhere.

#[derive(Debug, Deserialize)]
struct ChatCompletion {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: Option<ChatMessage>,
    logprobs: Option<LogprobsBlock>,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LogprobsBlock {
    content: Option<Vec<LogprobEntry>>,
}

#[derive(Debug, Deserialize)]
struct LogprobEntry {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

#[derive(Debug, Deserialize)]
struct StreamChunk {
    choices: Vec<StreamChoice>,
}

#[derive(Debug, Deserialize)]
struct StreamChoice {
    delta: Option<StreamDelta>,
    logprobs: Option<LogprobsBlock>,
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct StreamDelta {
    content: Option<String>,
}

/// Streaming generation client.
pub struct HttpGenerationBackend {
    agent: ureq::Agent,
    endpoint: EndpointConfig,
    settings: GenerationSettings,
    metrics: Mutex<CallMetrics>,
}

impl HttpGenerationBackend {
    pub fn new(endpoint: EndpointConfig, settings: GenerationSettings) -> Self {
        Self {
            agent: agent(),
            endpoint,
            settings,
            metrics: Mutex::new(CallMetrics::default()),
        }
    }

    pub fn metrics(&self) -> CallMetrics {
        *self.metrics.lock().expect("metrics lock")
    }

    fn record(&self, started: Instant) {
        let mut m = self.metrics.lock().expect("metrics lock");
        m.calls += 1;
        m.total_duration += started.elapsed();
    }

    fn completions_url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.endpoint.base_url.trim_end_matches('/')
        )
    }
}

struct SseTokenStream {
    reader: Option<BufReader<Box<dyn Read + Send + Sync + 'static>>>,
    scanner: EndOfThinkingScanner,
    pending: std::collections::VecDeque<TokenEvent>,
    line: String,
    finished: bool,
}

impl SseTokenStream {
    fn new(reader: ureq::BodyReader<'static>, end_marker: &str) -> Self {
        let boxed: Box<dyn Read + Send + Sync + 'static> = Box::new(reader);
        Self {
            reader: Some(BufReader::new(boxed)),
            scanner: EndOfThinkingScanner::new(end_marker),
            pending: std::collections::VecDeque::new(),
            line: String::new(),
            finished: false,
        }
    }

    /// Read SSE lines until at least one token event is available or the
    /// transport is exhausted.
    fn pump(&mut self) -> Result<(), BackendError> {
        while self.pending.is_empty() && !self.finished {
            let Some(reader) = self.reader.as_mut() else {
                self.finished = true;
                break;
            };
            self.line.clear();
            let n = reader
                .read_line(&mut self.line)
                .map_err(|e| BackendError::Transport(format!("stream read: {e}")))?;
            if n == 0 {
                // Transport closed: flush whatever the scanner held back.
                self.pending.extend(self.scanner.flush());
                self.finished = true;
                break;
            }
            let line = self.line.trim_end();
            let Some(payload) = line.strip_prefix("data:").map(str::trim_start) else {
                continue; // comments, blank keep-alives, event: lines
            };
            if payload == "[DONE]" {
                self.pending.extend(self.scanner.flush());
                self.finished = true;
                break;
            }
            let chunk: StreamChunk = serde_json::from_str(payload)
                .map_err(|e| BackendError::Transport(format!("malformed stream event: {e}")))?;
            let Some(choice) = chunk.choices.into_iter().next() else {
                continue;
            };
            if let Some(reason) = choice.finish_reason.as_deref() {
                if !reason.is_empty() {
                    self.pending.extend(self.scanner.flush());
                    self.finished = true;
                    break;
                }
            }
            let delta_text = choice.delta.and_then(|d| d.content).unwrap_or_default();
            let entries = choice
                .logprobs
                .and_then(|lp| lp.content)
                .unwrap_or_default();
            if entries.is_empty() {
                if delta_text.is_empty() {
                    continue; // role-only or empty keep-alive chunk
                }
                return Err(BackendError::MissingCapability {
                    field: "choices[0].logprobs.content".to_string(),
                    hint: "request token log-probabilities (logprobs: true) or use an endpoint that supports them"
                        .to_string(),
                });
            }
            for entry in entries {
                for ev in self.scanner.push(&entry.token, entry.logprob) {
                    self.pending.push_back(ev);
                }
                if self.scanner.saw_delimiter() {
                    self.finished = true;
                    self.reader = None;
                    break;
                }
            }
        }
        Ok(())
    }
}

impl TokenStream for SseTokenStream {
    fn next_event(&mut self) -> Option<Result<TokenEvent, BackendError>> {
        if self.pending.is_empty() {
            if self.finished {
                return None;
            }
            if let Err(e) = self.pump() {
                self.finished = true;
                self.reader = None;
                return Some(Err(e));
            }
        }
        self.pending.pop_front().map(Ok)
    }

    fn cancel(&mut self) {
        // Dropping the reader closes the connection; production stops with it.
        self.reader = None;
        self.finished = true;
        self.pending.clear();
    }
}

impl GenerationBackend for HttpGenerationBackend {
    fn stream(&self, question: &str) -> Result<Box<dyn TokenStream + '_>, BackendError> {
        let body = json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": question}],
            "stream": true,
            "logprobs": true,
            "temperature": self.settings.temperature,
            "top_p": self.settings.top_p,
        });
        let started = Instant::now();
        let response = post_json(
            &self.agent,
            &self.completions_url(),
            self.endpoint.api_key.as_deref(),
            &body,
        )?;
        self.record(started);
        let reader = response.into_body().into_reader();
        Ok(Box::new(SseTokenStream::new(
            reader,
            &self.settings.end_of_thinking,
        )))
    }

    fn probe(&self, request: &ProbeRequest<'_>) -> Result<ProbeGeneration, BackendError> {
        // A probe is one non-streaming continuation of the truncated
        // prefix plus the answer-inducing suffix, sent as a fresh request.
        let content = format!(
            "{}\n\n{}",
            request.question,
            build_probe_prompt(request.reasoning_prefix, request.task)
        );
        let body = json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": content}],
            "stream": false,
            "logprobs": true,
            "top_logprobs": 8,
            "max_tokens": request.token_cap,
            "temperature": self.settings.temperature,
            "top_p": self.settings.top_p,
        });
        let started = Instant::now();
        let mut response = post_json(
            &self.agent,
            &self.completions_url(),
            self.endpoint.api_key.as_deref(),
            &body,
        )?;
        self.record(started);
        let completion: ChatCompletion = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("malformed completion: {e}")))?;
        let choice = completion
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Transport("completion has no choices".to_string()))?;
        let entries = choice.logprobs.and_then(|lp| lp.content).ok_or_else(|| {
            BackendError::MissingCapability {
                field: "choices[0].logprobs.content".to_string(),
                hint: "probe confidence needs per-token log-probabilities".to_string(),
            }
        })?;
        if entries.is_empty() {
            // Fall back to the raw text so at least the answer is visible.
            let text = choice.message.and_then(|m| m.content).unwrap_or_default();
            if text.is_empty() {
                return Err(BackendError::Transport(
                    "probe returned no tokens".to_string(),
                ));
            }
            return Err(BackendError::MissingCapability {
                field: "choices[0].logprobs.content".to_string(),
                hint: "endpoint returned text without token log-probabilities".to_string(),
            });
        }
        let tokens = entries
            .into_iter()
            .map(|e| ProbeToken {
                text: e.token,
                logprob: e.logprob.min(0.0),
                top_choices: e
                    .top_logprobs
                    .into_iter()
                    .map(|t| (t.token, t.logprob))
                    .collect(),
            })
            .collect();
        Ok(ProbeGeneration { tokens })
    }
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f64>,
}

/// Remote embedding client with per-text caching and dimension-drift
/// detection.
pub struct HttpEmbeddingBackend {
    agent: ureq::Agent,
    endpoint: EndpointConfig,
    expected_dim: Mutex<Option<usize>>,
    cache: Mutex<HashMap<String, Embedding>>,
    metrics: Mutex<CallMetrics>,
}

impl HttpEmbeddingBackend {
    pub fn new(endpoint: EndpointConfig) -> Self {
        Self {
            agent: agent(),
            endpoint,
            expected_dim: Mutex::new(None),
            cache: Mutex::new(HashMap::new()),
            metrics: Mutex::new(CallMetrics::default()),
        }
    }

    pub fn metrics(&self) -> CallMetrics {
        *self.metrics.lock().expect("metrics lock")
    }

    fn embeddings_url(&self) -> String {
        format!(
            "{}/embeddings",
            self.endpoint.base_url.trim_end_matches('/')
        )
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(text) {
            return Ok(hit.clone());
        }
        let body = json!({ "model": self.endpoint.model, "input": text });
        let started = Instant::now();
        let mut response = post_json(
            &self.agent,
            &self.embeddings_url(),
            self.endpoint.api_key.as_deref(),
            &body,
        )?;
        {
            let mut m = self.metrics.lock().expect("metrics lock");
            m.calls += 1;
            m.total_duration += started.elapsed();
        }
        let parsed: EmbeddingResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(format!("malformed embedding response: {e}")))?;
        let row =
            parsed.data.into_iter().next().ok_or_else(|| {
                BackendError::Transport("embedding response has no data".to_string())
            })?;
        let dim = row.embedding.len();
        {
            let mut expected = self.expected_dim.lock().expect("dim lock");
            match *expected {
                None => *expected = Some(dim),
                Some(want) if want != dim => {
                    return Err(BackendError::Config(format!(
                        "embedding dimension drifted: first saw {want}, now {dim}"
                    )));
                }
                _ => {}
            }
        }
        let embedding = Embedding::new(row.embedding)
            .map_err(|e| BackendError::Config(format!("embedding vector rejected: {e}")))?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(text.to_string(), embedding.clone());
        Ok(embedding)
    }

    fn dim(&self) -> usize {
        self.expected_dim.lock().expect("dim lock").unwrap_or(0)
    }
}
