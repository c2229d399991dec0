//! Per-episode orchestration: stream steps, gate candidates on redundancy,
//! run verification windows, consult the loop breaker, account tokens, and
//! emit an episode record.
//!
//! The state machine processes steps strictly in order. A redundancy-flagged
//! step requests a trial-answer probe; probes accumulate into a verification
//! window that either authorizes a verified exit or is discarded. The loop
//! breaker is consulted on every step and fires only when no verified exit
//! happened on the same step. Stream end (or a safety cap) yields a
//! full-reasoning episode closed by one final answer-inducing probe.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::backends::{
    BackendError, EmbeddingBackend, GenerationBackend, ProbeGeneration, ProbeRequest,
};
use crate::loop_breaker::{LoopBreakerConfig, LoopBreakerState};
use crate::redundancy::{redundancy_score, Embedding, RedundancyConfig, RedundancyError};
use crate::segmenter::{IncrementalSegmenter, ReasoningStep, SegmenterConfig, SegmenterError};
use crate::verification::{
    exit_decision, extract_boxed_answer, mc_confidence, ProbeResult, TaskKind, VerificationConfig,
    VerificationError, VerificationWindow,
};

/// All stopping hyperparameters for one episode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PumaConfig {
    pub segmenter: SegmenterConfig,
    pub redundancy: RedundancyConfig,
    pub verification: VerificationConfig,
    pub loop_breaker: LoopBreakerConfig,
    pub task: TaskKind,
    /// Safety cap on processed steps.
    pub max_steps: usize,
    /// Safety cap on total accounted tokens (stream plus probes).
    pub max_total_tokens: usize,
}

impl Default for PumaConfig {
    fn default() -> Self {
        Self::for_task(TaskKind::Math)
    }
}

impl PumaConfig {
    pub fn for_task(task: TaskKind) -> Self {
        Self {
            segmenter: SegmenterConfig::default(),
            redundancy: RedundancyConfig::default(),
            verification: VerificationConfig::for_task(task),
            loop_breaker: LoopBreakerConfig::default(),
            task,
            max_steps: 512,
            max_total_tokens: 32768,
        }
    }

    // Negated comparisons are deliberate: they reject NaN values too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), String> {
        self.segmenter.validate().map_err(|e| e.to_string())?;
        if self.redundancy.k == 0 {
            return Err("redundancy.k must be >= 1".to_string());
        }
        if !(self.redundancy.tau_sim >= -1.0 && self.redundancy.tau_sim <= 1.0) {
            return Err(alloc::format!(
                "tau_sim must lie in [-1, 1], got {}",
                self.redundancy.tau_sim
            ));
        }
        let v = &self.verification;
        if !(v.lambda > 0.0 && v.lambda <= 1.0) {
            return Err(alloc::format!(
                "lambda must lie in (0, 1], got {}",
                v.lambda
            ));
        }
        if !(v.epsilon >= 0.0) {
            return Err(alloc::format!("epsilon must be >= 0, got {}", v.epsilon));
        }
        if v.window_len == 0 {
            return Err("window_len must be >= 1".to_string());
        }
        if v.probe_token_cap == 0 {
            return Err("probe_token_cap must be >= 1".to_string());
        }
        if !(v.mc_temperature > 0.0) {
            return Err(alloc::format!(
                "mc_temperature must be positive, got {}",
                v.mc_temperature
            ));
        }
        if !(v.code_match_threshold >= 0.0 && v.code_match_threshold <= 1.0) {
            return Err(alloc::format!(
                "code_match_threshold must lie in [0, 1], got {}",
                v.code_match_threshold
            ));
        }
        if let Some(m) = self.loop_breaker.m {
            if m == 0 {
                return Err("loop.m must be >= 1 when present".to_string());
            }
        }
        if !(self.loop_breaker.min_confidence_gate >= 0.0
            && self.loop_breaker.min_confidence_gate <= 1.0)
        {
            return Err(alloc::format!(
                "loop.gate must lie in [0, 1], got {}",
                self.loop_breaker.min_confidence_gate
            ));
        }
        if self.max_steps == 0 || self.max_total_tokens == 0 {
            return Err("safety caps must be positive".to_string());
        }
        Ok(())
    }
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ExitKind {
    VerifiedExit,
    LoopBreakerExit,
    FullReasoning,
}

/// Decision returned by the per-step state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerAction {
    /// Keep streaming.
    Continue,
    /// The step was flagged; issue a trial-answer probe and report back.
    Probe,
    ExitVerified,
    ExitLoopBreaker,
    ExitFull,
}

/// Parsed probe outcome. Malformed probes cost tokens but carry no answer.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeOutcome {
    Valid(ProbeResult),
    Malformed { probe_tokens: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Redundancy(#[from] RedundancyError),
    #[error(transparent)]
    Verification(#[from] VerificationError),
    #[error("probe outcome delivered without a pending probe request")]
    ProbeOutOfTurn,
    #[error("probe outcome for step {got} while step {expected} is pending")]
    ProbeIndexMismatch { got: usize, expected: usize },
    #[error("step index {got} out of order, expected {expected}")]
    StepOutOfOrder { got: usize, expected: usize },
    #[error("token reduction baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
}

/// Full record of one controlled generation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeResult {
    pub question_id: String,
    pub exit_kind: ExitKind,
    /// One-based index of the last retained step (0 when no steps).
    pub stop_step: usize,
    /// Steps processed before the episode ended.
    pub steps_total_emitted: usize,
    /// Sum of token counts of the retained steps `1..=stop_step`.
    pub reasoning_tokens: usize,
    /// Tokens spent on mid-stream trial-answer probes (including malformed
    /// ones).
    pub probe_tokens: usize,
    /// Tokens spent producing the final answer. Zero when the answer
    /// reuses a stored probe continuation.
    pub answer_tokens: usize,
    /// `reasoning_tokens + probe_tokens + answer_tokens`.
    pub total_tokens: usize,
    pub final_answer: String,
    pub probes: Vec<ProbeResult>,
    /// Byte-exact prefix of the stream: leading whitespace plus steps
    /// `1..=stop_step` with their interior separators.
    pub retained_prefix: String,
    /// True when a safety cap (max_steps / max_total_tokens) ended the
    /// episode; such episodes are recorded as full reasoning.
    pub hit_safety_cap: bool,
}

/// Episode-level failures. Backend errors carry the partial record
/// assembled so far.
#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("segmentation failed: {0}")]
    Segmenter(#[from] SegmenterError),
    #[error("controller invariant violated: {0}")]
    Controller(#[from] ControllerError),
    #[error("backend failure during {stage}: {source}")]
    Backend {
        stage: &'static str,
        source: BackendError,
        partial: Box<EpisodeResult>,
    },
}

/// Per-episode stopping state machine; drive it with [`on_step`] and
/// [`on_probe`], or let [`run`] do the driving.
///
/// [`on_step`]: Controller::on_step
/// [`on_probe`]: Controller::on_probe
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: PumaConfig,
    history: Vec<Embedding>,
    window: Option<VerificationWindow>,
    loop_state: LoopBreakerState,
    steps_seen: usize,
    awaiting_probe_for: Option<usize>,
    verified_anchor: Option<ProbeResult>,
    probes: Vec<ProbeResult>,
    probe_tokens_total: usize,
    malformed_probes: usize,
}

impl Controller {
    pub fn new(cfg: PumaConfig) -> Result<Self, ControllerError> {
        cfg.validate().map_err(ControllerError::InvalidConfig)?;
        Ok(Self {
            cfg,
            history: Vec::new(),
            window: None,
            loop_state: LoopBreakerState::new(),
            steps_seen: 0,
            awaiting_probe_for: None,
            verified_anchor: None,
            probes: Vec::new(),
            probe_tokens_total: 0,
            malformed_probes: 0,
        })
    }

    pub fn config(&self) -> &PumaConfig {
        &self.cfg
    }

    pub fn steps_seen(&self) -> usize {
        self.steps_seen
    }

    pub fn probes(&self) -> &[ProbeResult] {
        &self.probes
    }

    pub fn probe_tokens_total(&self) -> usize {
        self.probe_tokens_total
    }

    pub fn malformed_probes(&self) -> usize {
        self.malformed_probes
    }

    /// Anchor probe of the window that authorized a verified exit.
    pub fn verified_anchor(&self) -> Option<&ProbeResult> {
        self.verified_anchor.as_ref()
    }

    /// Highest-confidence probe observed so far.
    pub fn best_probe(&self) -> Option<&ProbeResult> {
        self.loop_state.best_probe.as_ref()
    }

    /// Score the next step. Returns `Probe` when the step is a candidate
    /// exit; the caller must then deliver the probe outcome via
    /// [`on_probe`](Self::on_probe) before the next step.
    pub fn on_step(
        &mut self,
        step: &ReasoningStep,
        embedding: Embedding,
    ) -> Result<ControllerAction, ControllerError> {
        if self.awaiting_probe_for.is_some() {
            return Err(ControllerError::ProbeOutOfTurn);
        }
        if step.index != self.steps_seen + 1 {
            return Err(ControllerError::StepOutOfOrder {
                got: step.index,
                expected: self.steps_seen + 1,
            });
        }
        let verdict = redundancy_score(&embedding, &self.history, &self.cfg.redundancy)?;
        self.history.push(embedding);
        self.steps_seen += 1;
        if verdict.is_redundant {
            self.awaiting_probe_for = Some(step.index);
            Ok(ControllerAction::Probe)
        } else {
            // Non-redundant steps reset the consecutive-redundancy run and
            // can never fire the fallback. The open verification window, if
            // any, stays open: it spans flagged candidates regardless of
            // interleaved novel steps.
            let fired = self.loop_state.observe_step(false, &self.cfg.loop_breaker);
            debug_assert!(!fired);
            Ok(ControllerAction::Continue)
        }
    }

    /// Deliver the probe outcome for the step that returned `Probe`.
    pub fn on_probe(&mut self, outcome: ProbeOutcome) -> Result<ControllerAction, ControllerError> {
        let pending = self
            .awaiting_probe_for
            .take()
            .ok_or(ControllerError::ProbeOutOfTurn)?;
        let mut verified = false;
        match outcome {
            ProbeOutcome::Valid(probe) => {
                if probe.step_index != pending {
                    return Err(ControllerError::ProbeIndexMismatch {
                        got: probe.step_index,
                        expected: pending,
                    });
                }
                self.probe_tokens_total += probe.probe_tokens;
                self.loop_state.record_probe(&probe);
                self.probes.push(probe.clone());
                let mut window = self.window.take().unwrap_or_default();
                window.push(probe)?;
                if window.len() == self.cfg.verification.window_len {
                    // Window complete: exit or discard it entirely; the next
                    // flagged candidate anchors a fresh window.
                    if exit_decision(&window, &self.cfg.verification, self.cfg.task)? {
                        self.verified_anchor = window.anchor().cloned();
                        verified = true;
                    }
                } else {
                    self.window = Some(window);
                }
            }
            ProbeOutcome::Malformed { probe_tokens } => {
                // A candidate without an extractable answer fails its
                // verification window but never aborts the episode.
                self.probe_tokens_total += probe_tokens;
                self.malformed_probes += 1;
                self.window = None;
            }
        }
        let lb_fired = self.loop_state.observe_step(true, &self.cfg.loop_breaker);
        if verified {
            Ok(ControllerAction::ExitVerified)
        } else if lb_fired {
            Ok(ControllerAction::ExitLoopBreaker)
        } else {
            Ok(ControllerAction::Continue)
        }
    }
}

/// Turn a raw probe continuation into an outcome: extract the answer span,
/// compute confidence, and classify failures as malformed.
pub fn parse_probe(
    generation: &ProbeGeneration,
    step_index: usize,
    task: TaskKind,
    cfg: &VerificationConfig,
) -> ProbeOutcome {
    let probe_tokens = generation.token_count();
    let malformed = ProbeOutcome::Malformed { probe_tokens };
    match task {
        TaskKind::Code => {
            let answer = generation.text();
            let span: Vec<f64> = generation.tokens.iter().map(|t| t.logprob).collect();
            if answer.trim().is_empty() || span.is_empty() {
                return malformed;
            }
            match ProbeResult::from_answer_span(step_index, answer, span, probe_tokens) {
                Ok(p) => ProbeOutcome::Valid(p),
                Err(_) => malformed,
            }
        }
        TaskKind::Math | TaskKind::MultipleChoice => {
            let text = generation.text();
            let Ok(answer) = extract_boxed_answer(&text) else {
                return malformed;
            };
            if answer.trim().is_empty() {
                return malformed;
            }
            // Answer-span tokens are the ones that start inside the boxed
            // span (the closing brace and anything after are excluded).
            let mut span = Vec::new();
            let mut first_answer_token: Option<&crate::backends::ProbeToken> = None;
            let mut offset = 0usize;
            for tok in &generation.tokens {
                if offset < answer.len() {
                    span.push(tok.logprob);
                    if first_answer_token.is_none() {
                        first_answer_token = Some(tok);
                    }
                }
                offset += tok.text.len();
            }
            if span.is_empty() {
                return malformed;
            }
            if task == TaskKind::MultipleChoice {
                if let Some(first) = first_answer_token {
                    if let Some(confidence) = mc_choice_confidence(first, &answer, cfg) {
                        return ProbeOutcome::Valid(ProbeResult {
                            step_index,
                            answer,
                            confidence,
                            probe_tokens,
                            raw_token_logprobs: span,
                        });
                    }
                }
                // No usable choice alternatives: fall back to the
                // geometric-mean confidence.
            }
            match ProbeResult::from_answer_span(step_index, answer, span, probe_tokens) {
                Ok(p) => ProbeOutcome::Valid(p),
                Err(_) => malformed,
            }
        }
    }
}

/// Softmax confidence over single-letter answer choices gathered from the
/// first answer token's scored alternatives. `None` when the alternatives
/// cannot support a calibrated estimate.
fn mc_choice_confidence(
    token: &crate::backends::ProbeToken,
    answer: &str,
    cfg: &VerificationConfig,
) -> Option<f64> {
    let picked = answer.trim().to_uppercase();
    if picked.chars().count() != 1 || !picked.chars().next().unwrap().is_ascii_alphabetic() {
        return None;
    }
    let mut choices: alloc::collections::BTreeMap<String, f64> =
        alloc::collections::BTreeMap::new();
    let mut add = |text: &str, lp: f64| {
        let key = text.trim().to_uppercase();
        if key.chars().count() == 1 && key.chars().next().unwrap().is_ascii_alphabetic() {
            choices.entry(key).or_insert(lp);
        }
    };
    add(&token.text, token.logprob);
    for (alt, lp) in &token.top_choices {
        add(alt, *lp);
    }
    if choices.len() < 2 || !choices.contains_key(&picked) {
        return None;
    }
    mc_confidence(&choices, &picked, cfg.mc_temperature).ok()
}

/// Token-reduction percentage: `(1 - tok_method / tok_full) * 100`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn token_reduction(tok_method: f64, tok_full: f64) -> Result<f64, ControllerError> {
    if !(tok_full > 0.0) {
        return Err(ControllerError::NonPositiveBaseline(tok_full));
    }
    Ok((1.0 - tok_method / tok_full) * 100.0)
}

/// Counts stream token events and attributes them to steps by byte region.
/// A step's region runs from the start of its text to the start of the next
/// step's text; the chain's leading whitespace counts toward step one.
struct TokenLedger {
    event_starts: Vec<usize>,
    attributed: usize,
    bytes_fed: usize,
}

impl TokenLedger {
    fn new() -> Self {
        Self {
            event_starts: Vec::new(),
            attributed: 0,
            bytes_fed: 0,
        }
    }

    fn on_event(&mut self, text_len: usize) {
        self.event_starts.push(self.bytes_fed);
        self.bytes_fed += text_len;
    }

    fn events_total(&self) -> usize {
        self.event_starts.len()
    }

    /// Number of events starting before `region_end`, not yet attributed.
    fn attribute_until(&mut self, region_end: usize) -> usize {
        let mut n = 0usize;
        while self.attributed < self.event_starts.len()
            && self.event_starts[self.attributed] < region_end
        {
            self.attributed += 1;
            n += 1;
        }
        n
    }

    fn attribute_rest(&mut self) -> usize {
        let n = self.event_starts.len() - self.attributed;
        self.attributed = self.event_starts.len();
        n
    }
}

/// Drive one full episode against the given backends.
pub fn run(
    question_id: &str,
    question: &str,
    generation: &dyn GenerationBackend,
    embedder: &dyn EmbeddingBackend,
    cfg: &PumaConfig,
) -> Result<EpisodeResult, EpisodeError> {
    cfg.validate().map_err(EpisodeError::Config)?;
    let mut seg = IncrementalSegmenter::new(cfg.segmenter)?;
    let mut ctl = Controller::new(cfg.clone())?;
    let mut ledger = TokenLedger::new();

    let mut steps: Vec<ReasoningStep> = Vec::new();
    // Reconstruction of the stream up to the last processed step's text end.
    let mut prefix_through_text = String::new();
    // Reconstruction including the last processed step's separator.
    let mut retained_full = String::new();
    let mut exit: Option<ControllerAction> = None;
    let mut hit_cap = false;

    let partial =
        |steps: &[ReasoningStep], ctl: &Controller, prefix: &str, q: &str| -> Box<EpisodeResult> {
            let stop_step = steps.len();
            let reasoning_tokens: usize = steps.iter().map(|s| s.token_count).sum();
            Box::new(EpisodeResult {
                question_id: q.to_string(),
                exit_kind: ExitKind::FullReasoning,
                stop_step,
                steps_total_emitted: steps.len(),
                reasoning_tokens,
                probe_tokens: ctl.probe_tokens_total(),
                answer_tokens: 0,
                total_tokens: reasoning_tokens + ctl.probe_tokens_total(),
                final_answer: String::new(),
                probes: ctl.probes().to_vec(),
                retained_prefix: prefix.to_string(),
                hit_safety_cap: false,
            })
        };

    let mut stream = generation
        .stream(question)
        .map_err(|source| EpisodeError::Backend {
            stage: "stream open",
            source,
            partial: partial(&steps, &ctl, &prefix_through_text, question_id),
        })?;

    // Process one emitted step: attribute its tokens, score it, probe if
    // flagged. `region_end` is the byte offset where the next step's text
    // begins, or `usize::MAX` for the final step of the stream.
    macro_rules! process_step {
        ($step:expr, $region_end:expr) => {{
            let mut step: ReasoningStep = $step;
            step.token_count = if $region_end == usize::MAX {
                ledger.attribute_rest()
            } else {
                ledger.attribute_until($region_end)
            };
            if steps.is_empty() {
                retained_full.push_str(seg.leading());
            }
            prefix_through_text = retained_full.clone();
            prefix_through_text.push_str(&step.text);
            retained_full.push_str(&step.text);
            retained_full.push_str(&step.sep_after);

            let embedding = embedder
                .embed(&step.text)
                .map_err(|source| EpisodeError::Backend {
                    stage: "embedding",
                    source,
                    partial: partial(&steps, &ctl, &prefix_through_text, question_id),
                })?;
            let mut action = ctl.on_step(&step, embedding)?;
            if action == ControllerAction::Probe {
                let request = ProbeRequest {
                    question,
                    reasoning_prefix: &prefix_through_text,
                    step_index: step.index,
                    token_cap: cfg.verification.probe_token_cap,
                    task: cfg.task,
                    is_closing: false,
                };
                let generation_out =
                    generation
                        .probe(&request)
                        .map_err(|source| EpisodeError::Backend {
                            stage: "probe",
                            source,
                            partial: partial(&steps, &ctl, &prefix_through_text, question_id),
                        })?;
                let outcome = parse_probe(&generation_out, step.index, cfg.task, &cfg.verification);
                action = ctl.on_probe(outcome)?;
            }
            steps.push(step);
            match action {
                ControllerAction::ExitVerified | ControllerAction::ExitLoopBreaker => Some(action),
                _ => {
                    if steps.len() >= cfg.max_steps {
                        hit_cap = true;
                        Some(ControllerAction::ExitFull)
                    } else {
                        None
                    }
                }
            }
        }};
    }

    'stream: loop {
        match stream.next_event() {
            None => break 'stream,
            Some(Err(source)) => {
                return Err(EpisodeError::Backend {
                    stage: "stream read",
                    source,
                    partial: partial(&steps, &ctl, &prefix_through_text, question_id),
                });
            }
            Some(Ok(event)) => {
                if event.is_end_of_thinking {
                    break 'stream;
                }
                ledger.on_event(event.text.len());
                let emitted = seg.feed(&event.text);
                for step in emitted {
                    let region_end = ledger_region_end(&seg, &retained_full, &step, steps.len());
                    if let Some(act) = process_step!(step, region_end) {
                        exit = Some(act);
                        stream.cancel();
                        break 'stream;
                    }
                }
                if ledger.events_total() + ctl.probe_tokens_total() >= cfg.max_total_tokens {
                    hit_cap = true;
                    exit = Some(ControllerAction::ExitFull);
                    stream.cancel();
                    break 'stream;
                }
            }
        }
    }

    if exit.is_none() {
        // Natural end of stream: flush the segmenter and process the
        // remaining steps; exits may still fire on them.
        let remaining = seg.finish();
        let last_idx = remaining.len();
        for (i, step) in remaining.into_iter().enumerate() {
            let region_end = if i + 1 == last_idx {
                usize::MAX
            } else {
                ledger_region_end(&seg, &retained_full, &step, steps.len())
            };
            if let Some(act) = process_step!(step, region_end) {
                exit = Some(act);
                break;
            }
        }
    }

    let exit_action = exit.unwrap_or(ControllerAction::ExitFull);
    let stop_step;
    let exit_kind;
    let final_answer;
    let mut answer_tokens = 0usize;

    match exit_action {
        ControllerAction::ExitVerified => {
            let anchor = ctl
                .verified_anchor()
                .expect("verified exit stores its anchor");
            exit_kind = ExitKind::VerifiedExit;
            stop_step = steps.len();
            final_answer = anchor.answer.clone();
        }
        ControllerAction::ExitLoopBreaker => {
            let best = ctl
                .best_probe()
                .expect("loop breaker requires a recorded probe");
            exit_kind = ExitKind::LoopBreakerExit;
            stop_step = steps.len();
            final_answer = best.answer.clone();
        }
        _ => {
            exit_kind = ExitKind::FullReasoning;
            stop_step = steps.len();
            // One closing probe produces the final answer.
            let request = ProbeRequest {
                question,
                reasoning_prefix: &prefix_through_text,
                step_index: steps.len(),
                token_cap: cfg.verification.probe_token_cap,
                task: cfg.task,
                is_closing: true,
            };
            let closing = generation
                .probe(&request)
                .map_err(|source| EpisodeError::Backend {
                    stage: "closing probe",
                    source,
                    partial: partial(&steps, &ctl, &prefix_through_text, question_id),
                })?;
            answer_tokens = closing.token_count();
            final_answer = match cfg.task {
                TaskKind::Code => closing.text(),
                _ => extract_boxed_answer(&closing.text())
                    .unwrap_or_else(|_| closing.text().trim().to_string()),
            };
        }
    }

    let reasoning_tokens: usize = steps[..stop_step].iter().map(|s| s.token_count).sum();
    let probe_tokens = ctl.probe_tokens_total();
    Ok(EpisodeResult {
        question_id: question_id.to_string(),
        exit_kind,
        stop_step,
        steps_total_emitted: steps.len(),
        reasoning_tokens,
        probe_tokens,
        answer_tokens,
        total_tokens: reasoning_tokens + probe_tokens + answer_tokens,
        final_answer,
        probes: ctl.probes().to_vec(),
        retained_prefix: prefix_through_text,
        hit_safety_cap: hit_cap,
    })
}

/// Byte offset where the step after `step` begins: everything reconstructed
/// so far, plus this step's text and separator. The first step's region
/// additionally covers the leading whitespace.
fn ledger_region_end(
    seg: &IncrementalSegmenter,
    retained_full: &str,
    step: &ReasoningStep,
    steps_so_far: usize,
) -> usize {
    let lead = if steps_so_far == 0 {
        seg.leading().len()
    } else {
        0
    };
    retained_full.len() + lead + step.text.len() + step.sep_after.len()
}
