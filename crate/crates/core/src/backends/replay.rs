//! Deterministic replay of recorded traces.
//!
//! The stream re-emits each recorded step's text as `token_count` events
//! (characters distributed evenly), with blank-line separators between
//! steps so the segmenter recovers the recorded step structure. Probes are
//! answered from the recorded per-step trial answers when present, else
//! from a deterministic stub keyed on the step index.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{
    BackendError, GenerationBackend, ProbeGeneration, ProbeRequest, ProbeToken, TokenEvent,
    TokenStream, TraceRecord,
};
use crate::verification::TaskKind;

/// Confidence assigned to stub probe answers when the trace has none.
pub const STUB_PROBE_CONFIDENCE: f64 = 0.5;

/// Replays one recorded trace as a token stream with probe lookups.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    trace: TraceRecord,
}

impl ReplayBackend {
    pub fn new(trace: TraceRecord) -> Result<Self, BackendError> {
        trace.validate()?;
        Ok(Self { trace })
    }

    pub fn trace(&self) -> &TraceRecord {
        &self.trace
    }

    /// The step separator used on replay.
    pub const STEP_SEPARATOR: &'static str = "\n\n";
}

/// Split `text` into `pieces` chunks at char boundaries, sizes as even as
/// possible. Pieces may be empty when there are more pieces than chars.
fn distribute(text: &str, pieces: usize) -> Vec<String> {
    debug_assert!(pieces > 0);
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut out = Vec::with_capacity(pieces);
    for i in 0..pieces {
        let start = i * n / pieces;
        let end = (i + 1) * n / pieces;
        out.push(chars[start..end].iter().collect());
    }
    out
}

struct ReplayStream {
    events: Vec<TokenEvent>,
    cursor: usize,
    cancelled: bool,
}

impl TokenStream for ReplayStream {
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

impl GenerationBackend for ReplayBackend {
    fn stream(&self, _question: &str) -> Result<Box<dyn TokenStream + '_>, BackendError> {
        let mut events = Vec::with_capacity(self.trace.reasoning_tokens() + 1);
        let last = self.trace.steps.len() - 1;
        for (i, step) in self.trace.steps.iter().enumerate() {
            let mut pieces = distribute(&step.text, step.token_count);
            if i != last {
                // Attach the separator to the step's final token so every
                // event of a step starts inside the step's text region.
                pieces
                    .last_mut()
                    .expect("token_count >= 1")
                    .push_str(Self::STEP_SEPARATOR);
            }
            for piece in pieces {
                events.push(TokenEvent::text(piece, 0.0));
            }
        }
        events.push(TokenEvent::end_of_thinking());
        Ok(Box::new(ReplayStream {
            events,
            cursor: 0,
            cancelled: false,
        }))
    }

    fn probe(&self, request: &ProbeRequest<'_>) -> Result<ProbeGeneration, BackendError> {
        let (answer, confidence) = if request.is_closing {
            // The uninterrupted chain ends in the recorded final answer.
            (self.trace.final_answer.clone(), STUB_PROBE_CONFIDENCE)
        } else {
            let recorded = self
                .trace
                .steps
                .get(request.step_index.wrapping_sub(1))
                .and_then(|s| {
                    s.trial_answer
                        .as_ref()
                        .map(|a| (a.clone(), s.trial_confidence))
                });
            match recorded {
                Some((answer, conf)) => (answer, conf.unwrap_or(STUB_PROBE_CONFIDENCE)),
                None => (
                    alloc::format!("stub-{}", request.step_index),
                    STUB_PROBE_CONFIDENCE,
                ),
            }
        };
        let conf = confidence.clamp(f64::MIN_POSITIVE, 1.0);
        let mut tokens = Vec::with_capacity(2);
        tokens.push(ProbeToken::new(answer, crate::mathx::ln(conf)));
        if request.task != TaskKind::Code {
            tokens.push(ProbeToken::new("}".to_string(), 0.0));
        }
        Ok(ProbeGeneration { tokens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::TraceStep;
    use crate::segmenter::{segment, SegmenterConfig};
    use alloc::vec;

    fn step(text: &str, tokens: usize, trial: Option<(&str, f64)>) -> TraceStep {
        TraceStep {
            text: text.to_string(),
            token_count: tokens,
            trial_answer: trial.map(|(a, _)| a.to_string()),
            trial_confidence: trial.map(|(_, c)| c),
        }
    }

    fn long(text: &str, len: usize) -> String {
        let mut s = String::from(text);
        while s.chars().count() < len {
            s.push_str(" filler");
        }
        let mut s: String = s.chars().take(len).collect();
        if s.ends_with(' ') {
            s.pop();
            s.push('x');
        }
        s
    }

    fn trace(steps: Vec<TraceStep>) -> TraceRecord {
        let total = steps.iter().map(|s| s.token_count).sum();
        TraceRecord {
            id: "t".to_string(),
            question: "q".to_string(),
            task: TaskKind::Math,
            steps,
            final_answer: "5".to_string(),
            gold_answer: Some("5".to_string()),
            total_tokens: total,
        }
    }

    #[test]
    fn stream_text_reconstructs_reasoning() {
        let tr = trace(vec![
            step("alpha beta", 3, None),
            step("gamma delta", 5, None),
            step("epsilon", 2, None),
        ]);
        let backend = ReplayBackend::new(tr.clone()).unwrap();
        let mut stream = backend.stream("q").unwrap();
        let mut text = String::new();
        let mut count = 0usize;
        while let Some(ev) = stream.next_event() {
            let ev = ev.unwrap();
            if ev.is_end_of_thinking {
                break;
            }
            text.push_str(&ev.text);
            count += 1;
        }
        assert_eq!(text, tr.reasoning_text());
        assert_eq!(count, 10, "one event per recorded token");
    }

    #[test]
    fn segmenter_recovers_recorded_steps() {
        let tr = trace(vec![
            step(&long("We are given a problem about sums", 260), 60, None),
            step(&long("compute 12 * 12 = 144 and add", 300), 70, None),
            step(&long("check the parity of the result", 240), 55, None),
        ]);
        let backend = ReplayBackend::new(tr.clone()).unwrap();
        let mut stream = backend.stream("q").unwrap();
        let mut text = String::new();
        while let Some(ev) = stream.next_event() {
            let ev = ev.unwrap();
            if ev.is_end_of_thinking {
                break;
            }
            text.push_str(&ev.text);
        }
        let steps = segment(&text, &SegmenterConfig::default()).unwrap();
        let got: Vec<&str> = steps.iter().map(|s| s.text.as_str()).collect();
        let want: Vec<&str> = tr.steps.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn cancel_stops_event_production() {
        let tr = trace(vec![step("alpha beta gamma", 6, None)]);
        let backend = ReplayBackend::new(tr).unwrap();
        let mut stream = backend.stream("q").unwrap();
        assert!(stream.next_event().is_some());
        stream.cancel();
        assert!(stream.next_event().is_none());
    }

    #[test]
    fn probe_prefers_recorded_trial_answers() {
        let tr = trace(vec![step("a", 1, Some(("7", 0.9))), step("b", 1, None)]);
        let backend = ReplayBackend::new(tr).unwrap();
        let req = ProbeRequest {
            question: "q",
            reasoning_prefix: "a",
            step_index: 1,
            token_cap: 30,
            task: TaskKind::Math,
            is_closing: false,
        };
        let gen = backend.probe(&req).unwrap();
        assert_eq!(gen.text(), "7}");
        assert!((gen.tokens[0].logprob - 0.9_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn probe_stub_is_deterministic_without_recordings() {
        let tr = trace(vec![step("a", 1, None), step("b", 1, None)]);
        let backend = ReplayBackend::new(tr).unwrap();
        let req = ProbeRequest {
            question: "q",
            reasoning_prefix: "a",
            step_index: 2,
            token_cap: 30,
            task: TaskKind::Math,
            is_closing: false,
        };
        let first = backend.probe(&req).unwrap();
        let second = backend.probe(&req).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.text(), "stub-2}");
    }

    #[test]
    fn probes_do_not_disturb_the_stream() {
        let tr = trace(vec![
            step("alpha beta", 4, None),
            step("gamma delta", 4, None),
        ]);
        let backend = ReplayBackend::new(tr).unwrap();

        let collect = |probe_every: bool| {
            let mut stream = backend.stream("q").unwrap();
            let mut events = Vec::new();
            let mut i = 0usize;
            while let Some(ev) = stream.next_event() {
                events.push(ev.unwrap());
                if probe_every {
                    let req = ProbeRequest {
                        question: "q",
                        reasoning_prefix: "x",
                        step_index: 1 + i % 2,
                        token_cap: 30,
                        task: TaskKind::Math,
                        is_closing: false,
                    };
                    backend.probe(&req).unwrap();
                }
                i += 1;
            }
            events
        };
        assert_eq!(collect(false), collect(true));
    }

    #[test]
    fn token_counts_sum_over_steps() {
        let tr = trace(vec![
            step("aaaa", 10, None),
            step("bb", 5, None),
            step("ccc", 7, None),
        ]);
        let backend = ReplayBackend::new(tr).unwrap();
        let mut stream = backend.stream("q").unwrap();
        let mut count = 0usize;
        while let Some(ev) = stream.next_event() {
            if !ev.unwrap().is_end_of_thinking {
                count += 1;
            }
        }
        assert_eq!(count, 22);
    }
}
