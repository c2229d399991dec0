//! HTTP provider behavior against a scripted local server: event order,
//! missing-capability reporting, prompt cancellation, embedding
//! normalization, dimension-drift detection, and latency metrics.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use puma_cli::config::GenerationSettings;
use puma_cli::http::{EndpointConfig, HttpEmbeddingBackend, HttpGenerationBackend};
use puma_core::backends::{BackendError, EmbeddingBackend, GenerationBackend, ProbeRequest};
use puma_core::verification::TaskKind;

/// Minimal scripted HTTP server: the handler sees (request_ordinal, path,
/// body) and returns raw bytes written after the status line and headers
/// it provides itself.
struct TestServer {
    addr: String,
}

impl TestServer {
    fn spawn<F>(handler: F) -> Self
    where
        F: Fn(usize, &str, &str) -> Vec<u8> + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let counter = Arc::new(AtomicUsize::new(0));
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let handler = &handler;
                handle_connection(stream, n, handler);
            }
        });
        Self { addr }
    }
}

fn handle_connection<F>(mut stream: TcpStream, ordinal: usize, handler: &F)
where
    F: Fn(usize, &str, &str) -> Vec<u8>,
{
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok();
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() || request_line.is_empty() {
        return;
    }
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("/")
        .to_string();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).is_err() {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut body).ok();
    }
    let body = String::from_utf8_lossy(&body).into_owned();
    let response = handler(ordinal, &path, &body);
    stream.write_all(&response).ok();
    stream.flush().ok();
}

fn sse_response(events: &[&str]) -> Vec<u8> {
    let mut body = String::new();
    for ev in events {
        body.push_str("data: ");
        body.push_str(ev);
        body.push_str("\n\n");
    }
    body.push_str("data: [DONE]\n\n");
    let mut out = format!(
        "HTTP/1.1 200 OK\r\ncontent-type: text/event-stream\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        body.len()
    )
    .into_bytes();
    out.extend_from_slice(body.as_bytes());
    out
}

fn json_response(value: serde_json::Value) -> Vec<u8> {
    let body = value.to_string();
    let mut out = format!(
        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        body.len()
    )
    .into_bytes();
    out.extend_from_slice(body.as_bytes());
    out
}

fn chunk(token: &str, logprob: f64) -> String {
    serde_json::json!({
        "choices": [{
            "delta": {"content": token},
            "logprobs": {"content": [{"token": token, "logprob": logprob}]}
        }]
    })
    .to_string()
}

fn endpoint(addr: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: addr.to_string(),
        model: "test-model".to_string(),
        api_key: None,
    }
}

fn gen_backend(addr: &str) -> HttpGenerationBackend {
    HttpGenerationBackend::new(endpoint(addr), GenerationSettings::default())
}

#[test]
fn stream_yields_three_tokens_in_order() {
    let server = TestServer::spawn(|_, _, _| {
        sse_response(&[
            &chunk("alpha ", -0.1),
            &chunk("beta ", -0.2),
            &chunk("gamma", -0.3),
        ])
    });
    let backend = gen_backend(&server.addr);
    let mut stream = backend.stream("question").unwrap();
    let mut texts = Vec::new();
    let mut logprobs = Vec::new();
    while let Some(ev) = stream.next_event() {
        let ev = ev.unwrap();
        if ev.is_end_of_thinking {
            break;
        }
        texts.push(ev.text);
        logprobs.push(ev.logprob);
    }
    assert_eq!(texts, vec!["alpha ", "beta ", "gamma"]);
    assert_eq!(logprobs, vec![-0.1, -0.2, -0.3]);
}

#[test]
fn stream_detects_end_of_thinking_delimiter() {
    let server = TestServer::spawn(|_, _, _| {
        sse_response(&[
            &chunk("so six", -0.1),
            &chunk("</think>", -0.1),
            &chunk("final answer", -0.1),
        ])
    });
    let backend = gen_backend(&server.addr);
    let mut stream = backend.stream("question").unwrap();
    let mut events = Vec::new();
    while let Some(ev) = stream.next_event() {
        events.push(ev.unwrap());
    }
    let text: String = events.iter().map(|e| e.text.as_str()).collect();
    assert_eq!(text, "so six");
    assert!(events.last().unwrap().is_end_of_thinking);
}

#[test]
fn missing_logprobs_is_a_capability_error() {
    let server = TestServer::spawn(|_, _, _| {
        let ev = serde_json::json!({"choices": [{"delta": {"content": "text without logprobs"}}]})
            .to_string();
        sse_response(&[&ev])
    });
    let backend = gen_backend(&server.addr);
    let mut stream = backend.stream("question").unwrap();
    match stream.next_event() {
        Some(Err(BackendError::MissingCapability { field, .. })) => {
            assert!(
                field.contains("logprobs"),
                "error names the missing field: {field}"
            );
        }
        other => panic!("expected capability error, got {other:?}"),
    }
}

#[test]
fn cancel_stops_the_stream_promptly() {
    let server = TestServer::spawn(|_, _, _| {
        sse_response(&[
            &chunk("one", -0.1),
            &chunk("two", -0.1),
            &chunk("three", -0.1),
        ])
    });
    let backend = gen_backend(&server.addr);
    let mut stream = backend.stream("question").unwrap();
    let first = stream.next_event().unwrap().unwrap();
    assert_eq!(first.text, "one");
    let started = std::time::Instant::now();
    stream.cancel();
    assert!(stream.next_event().is_none());
    assert!(
        started.elapsed() < Duration::from_secs(1),
        "cancel must not block"
    );
}

#[test]
fn probe_parses_tokens_and_alternatives() {
    let server = TestServer::spawn(|_, _, body| {
        assert!(
            body.contains("The final answer is"),
            "probe prompt carries the suffix"
        );
        json_response(serde_json::json!({
            "choices": [{
                "message": {"content": "42}"},
                "logprobs": {"content": [
                    {"token": "42", "logprob": -0.05, "top_logprobs": [
                        {"token": "42", "logprob": -0.05},
                        {"token": "41", "logprob": -4.0}
                    ]},
                    {"token": "}", "logprob": -0.01}
                ]}
            }]
        }))
    });
    let backend = gen_backend(&server.addr);
    let request = ProbeRequest {
        question: "q",
        reasoning_prefix: "prefix",
        step_index: 3,
        token_cap: 30,
        task: TaskKind::Math,
        is_closing: false,
    };
    let generation = backend.probe(&request).unwrap();
    assert_eq!(generation.text(), "42}");
    assert_eq!(generation.tokens.len(), 2);
    assert_eq!(generation.tokens[0].top_choices.len(), 2);
    let metrics = backend.metrics();
    assert_eq!(metrics.calls, 1);
}

#[test]
fn probe_without_logprobs_is_a_capability_error() {
    let server = TestServer::spawn(|_, _, _| {
        json_response(serde_json::json!({
            "choices": [{"message": {"content": "42}"}}]
        }))
    });
    let backend = gen_backend(&server.addr);
    let request = ProbeRequest {
        question: "q",
        reasoning_prefix: "prefix",
        step_index: 1,
        token_cap: 30,
        task: TaskKind::Math,
        is_closing: false,
    };
    match backend.probe(&request) {
        Err(BackendError::MissingCapability { field, .. }) => assert!(field.contains("logprobs")),
        other => panic!("expected capability error, got {other:?}"),
    }
}

#[test]
fn embedding_is_normalized_and_cached() {
    let calls = Arc::new(AtomicUsize::new(0));
    let calls_seen = calls.clone();
    let server = TestServer::spawn(move |_, _, _| {
        calls_seen.fetch_add(1, Ordering::SeqCst);
        json_response(serde_json::json!({
            "data": [{"embedding": [3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]}]
        }))
    });
    let backend = HttpEmbeddingBackend::new(endpoint(&server.addr));
    let a = backend.embed("some step text").unwrap();
    let b = backend.embed("some step text").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dim(), 8);
    let norm: f64 = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(
        (norm - 1.0).abs() < 1e-9,
        "service vector must be normalized locally"
    );
    assert_eq!(
        calls.load(Ordering::SeqCst),
        1,
        "repeated scoring costs one call"
    );
    assert_eq!(backend.dim(), 8);
    let metrics = backend.metrics();
    assert_eq!(metrics.calls, 1);
    assert!(
        metrics.total_duration > Duration::ZERO,
        "latency is recorded per call"
    );
}

#[test]
fn embedding_dimension_drift_is_a_config_error() {
    let server = TestServer::spawn(|ordinal, _, _| {
        let dims = if ordinal == 0 {
            vec![1.0; 8]
        } else {
            vec![1.0; 16]
        };
        json_response(serde_json::json!({ "data": [{"embedding": dims}] }))
    });
    let backend = HttpEmbeddingBackend::new(endpoint(&server.addr));
    backend.embed("first").unwrap();
    match backend.embed("second") {
        Err(BackendError::Config(msg)) => assert!(msg.contains("drift"), "{msg}"),
        other => panic!("expected config error, got {other:?}"),
    }
}
