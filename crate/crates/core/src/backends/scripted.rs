//! Scripted generation backend for tests and offline smoke runs.
//!
//! Unlike the replay provider, the script controls raw probe continuations
//! directly, so tests can exercise malformed probes, custom token
//! alternatives, and arbitrary streaming chunk shapes.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{
    BackendError, GenerationBackend, ProbeGeneration, ProbeRequest, ProbeToken, TokenEvent,
    TokenStream,
};
use crate::verification::TaskKind;

/// What a probe at a given step returns.
#[derive(Debug, Clone)]
pub enum ProbeScript {
    /// A well-formed boxed answer (the closing brace is appended for
    /// non-code tasks) with one token per answer and the given confidence.
    Boxed { answer: String, confidence: f64 },
    /// Raw tokens, returned verbatim; use this to script malformed probes.
    Raw(Vec<ProbeToken>),
}

impl ProbeScript {
    pub fn boxed(answer: &str, confidence: f64) -> Self {
        Self::Boxed {
            answer: answer.to_string(),
            confidence,
        }
    }
}

/// One scripted reasoning step.
#[derive(Debug, Clone)]
pub struct ScriptedStep {
    pub text: String,
    /// How many token events the step's text is split into.
    pub tokens: usize,
}

impl ScriptedStep {
    pub fn new(text: impl Into<String>, tokens: usize) -> Self {
        Self {
            text: text.into(),
            tokens: tokens.max(1),
        }
    }
}

/// Fully scripted backend: fixed steps, per-step probe outcomes.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    steps: Vec<ScriptedStep>,
    probes: BTreeMap<usize, ProbeScript>,
    emit_end_marker: bool,
}

impl ScriptedBackend {
    pub fn new(steps: Vec<ScriptedStep>) -> Self {
        Self {
            steps,
            probes: BTreeMap::new(),
            emit_end_marker: true,
        }
    }

    /// Script the probe outcome for a one-based step index.
    pub fn with_probe(mut self, step_index: usize, script: ProbeScript) -> Self {
        self.probes.insert(step_index, script);
        self
    }

    /// Suppress the end-of-thinking event so the stream just runs dry.
    pub fn without_end_marker(mut self) -> Self {
        self.emit_end_marker = false;
        self
    }
}

struct ScriptedStream {
    events: Vec<TokenEvent>,
    cursor: usize,
    cancelled: bool,
}

impl TokenStream for ScriptedStream {
    fn next_event(&mut self) -> Option<Result<TokenEvent, BackendError>> {
        if self.cancelled || self.cursor >= self.events.len() {
            return None;
        }
        let ev = self.events[self.cursor].clone();
        self.cursor += 1;
        Some(Ok(ev))
    }

    fn cancel(&mut self) {
        self.cancelled = true;
    }
}

impl GenerationBackend for ScriptedBackend {
    fn stream(&self, _question: &str) -> Result<Box<dyn TokenStream + '_>, BackendError> {
        let mut events = Vec::new();
        let last = self.steps.len().saturating_sub(1);
        for (i, step) in self.steps.iter().enumerate() {
            let chars: Vec<char> = step.text.chars().collect();
            let n = chars.len();
            for piece_idx in 0..step.tokens {
                let start = piece_idx * n / step.tokens;
                let end = (piece_idx + 1) * n / step.tokens;
                let mut text: String = chars[start..end].iter().collect();
                if piece_idx + 1 == step.tokens && i != last {
                    text.push_str("\n\n");
                }
                events.push(TokenEvent::text(text, -0.1));
            }
        }
        if self.emit_end_marker {
            events.push(TokenEvent::end_of_thinking());
        }
        Ok(Box::new(ScriptedStream {
            events,
            cursor: 0,
            cancelled: false,
        }))
    }

    fn probe(&self, request: &ProbeRequest<'_>) -> Result<ProbeGeneration, BackendError> {
        let script = self
            .probes
            .get(&request.step_index)
            .cloned()
            .unwrap_or_else(|| ProbeScript::Boxed {
                answer: alloc::format!("scripted-{}", request.step_index),
                confidence: 0.5,
            });
        match script {
            ProbeScript::Raw(tokens) => Ok(ProbeGeneration { tokens }),
            ProbeScript::Boxed { answer, confidence } => {
                let conf = confidence.clamp(f64::MIN_POSITIVE, 1.0);
                let mut tokens = Vec::with_capacity(2);
                tokens.push(ProbeToken::new(answer, crate::mathx::ln(conf)));
                if request.task != TaskKind::Code {
                    tokens.push(ProbeToken::new("}", 0.0));
                }
                Ok(ProbeGeneration { tokens })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn stream_emits_scripted_steps_with_separators() {
        let backend = ScriptedBackend::new(vec![
            ScriptedStep::new("abc", 2),
            ScriptedStep::new("def", 1),
        ]);
        let mut stream = backend.stream("q").unwrap();
        let mut text = String::new();
        let mut saw_end = false;
        while let Some(ev) = stream.next_event() {
            let ev = ev.unwrap();
            if ev.is_end_of_thinking {
                saw_end = true;
                break;
            }
            text.push_str(&ev.text);
        }
        assert_eq!(text, "abc\n\ndef");
        assert!(saw_end);
    }

    #[test]
    fn scripted_probe_and_default() {
        let backend = ScriptedBackend::new(vec![ScriptedStep::new("abc", 1)])
            .with_probe(1, ProbeScript::boxed("42", 0.99));
        let req = |idx| ProbeRequest {
            question: "q",
            reasoning_prefix: "abc",
            step_index: idx,
            token_cap: 30,
            task: TaskKind::Math,
            is_closing: false,
        };
        assert_eq!(backend.probe(&req(1)).unwrap().text(), "42}");
        assert_eq!(backend.probe(&req(9)).unwrap().text(), "scripted-9}");
    }

    #[test]
    fn raw_probe_script_passes_through() {
        let backend = ScriptedBackend::new(vec![ScriptedStep::new("abc", 1)]).with_probe(
            1,
            ProbeScript::Raw(vec![ProbeToken::new("no closing brace", -0.5)]),
        );
        let req = ProbeRequest {
            question: "q",
            reasoning_prefix: "abc",
            step_index: 1,
            token_cap: 30,
            task: TaskKind::Math,
            is_closing: false,
        };
        assert_eq!(backend.probe(&req).unwrap().text(), "no closing brace");
    }
}
