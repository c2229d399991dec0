//! Trial-answer induction, confidence scoring, answer consistency, and the
//! exit predicate.
//!
//! At a candidate exit the controller appends a task-specific
//! answer-inducing suffix to the reasoning prefix and probes the model for
//! a short trial answer. Confidence is the geometric mean of the answer
//! span's token probabilities (a temperature-scaled softmax over the
//! answer choices for multiple choice). The exit predicate over a window
//! of `L` probed candidates requires the anchor to clear the confidence
//! threshold, later answers to match the anchor, and later confidences not
//! to fall more than `epsilon` below the anchor.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::mathx;
use crate::seqmatch;

/// Task family; fixed per episode. Decides the probe suffix, answer
/// extraction, and the answer-match rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskKind {
    Math,
    #[cfg_attr(feature = "serde", serde(alias = "mc"))]
    MultipleChoice,
    Code,
}

/// Bit-exact answer-inducing suffixes. Math and multiple choice leave the
/// think tag open; code closes it so the model switches to solution mode.
pub const MATH_SUFFIX: &str = "\n**Final Answer**\n\nThe final answer is \\boxed{";
pub const MULTIPLE_CHOICE_SUFFIX: &str = "\n**Final Answer**\n\nThe answer choice is \\boxed{";
pub const CODE_SUFFIX: &str = "</think>\n\n### Solution Code\n```python\n";

/// The answer-inducing suffix for a task.
pub fn probe_suffix(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Math => MATH_SUFFIX,
        TaskKind::MultipleChoice => MULTIPLE_CHOICE_SUFFIX,
        TaskKind::Code => CODE_SUFFIX,
    }
}

/// Prefix plus the task suffix, ready to hand to the backend.
pub fn build_probe_prompt(prefix: &str, task: TaskKind) -> String {
    let suffix = probe_suffix(task);
    let mut out = String::with_capacity(prefix.len() + suffix.len());
    out.push_str(prefix);
    out.push_str(suffix);
    out
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerificationError {
    /// The probe continuation never balanced the opened box.
    #[error("probe continuation has no balanced boxed answer")]
    ProbeMalformed,
    #[error("answer span has no tokens")]
    EmptyAnswerSpan,
    #[error("log-probabilities must be <= 0, got {0}")]
    PositiveLogprob(f64),
    #[error("picked choice {0:?} is not among the scored choices")]
    UnknownChoice(String),
    #[error("softmax temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("verification window holds {got} probes, expected {expected}")]
    WindowSize { got: usize, expected: usize },
    #[error("probe step indices must be strictly increasing")]
    NonMonotonicWindow,
}

/// One trial-answer probe at a candidate exit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeResult {
    /// One-based index of the candidate step.
    pub step_index: usize,
    /// Extracted trial answer.
    pub answer: String,
    /// Geometric-mean token probability of the answer span (softmax over
    /// choices for multiple choice), in `[0, 1]`.
    pub confidence: f64,
    /// Tokens spent generating this probe.
    pub probe_tokens: usize,
    /// Log-probabilities of the answer-span tokens.
    pub raw_token_logprobs: Vec<f64>,
}

impl ProbeResult {
    /// Build a probe result from the answer span's token log-probabilities,
    /// computing the confidence as their geometric mean.
    pub fn from_answer_span(
        step_index: usize,
        answer: String,
        span_logprobs: Vec<f64>,
        probe_tokens: usize,
    ) -> Result<Self, VerificationError> {
        let confidence = answer_confidence(&span_logprobs)?;
        Ok(Self {
            step_index,
            answer,
            confidence,
            probe_tokens,
            raw_token_logprobs: span_logprobs,
        })
    }
}

/// Verification-stage thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VerificationConfig {
    /// Confidence threshold on the window anchor (strict >).
    pub lambda: f64,
    /// Stability tolerance: later confidences may not drop more than this
    /// below the anchor.
    pub epsilon: f64,
    /// Number of probed candidates per verification window.
    pub window_len: usize,
    /// Probe generation cap, in tokens.
    pub probe_token_cap: usize,
    /// Softmax temperature for multiple-choice confidence.
    pub mc_temperature: f64,
    /// Sequence-similarity threshold for fuzzy code answer matching.
    pub code_match_threshold: f64,
}

impl VerificationConfig {
    /// Defaults for a task; the probe cap is task dependent.
    pub fn for_task(task: TaskKind) -> Self {
        Self {
            lambda: 0.98,
            epsilon: 0.03,
            window_len: 2,
            probe_token_cap: match task {
                TaskKind::Code => 50,
                _ => 30,
            },
            mc_temperature: 1.0,
            code_match_threshold: 0.8,
        }
    }
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self::for_task(TaskKind::Math)
    }
}

/// Ordered probes at detector-flagged candidates `t_1 < t_2 < ... < t_L`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationWindow {
    probes: Vec<ProbeResult>,
}

impl VerificationWindow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn anchored(probe: ProbeResult) -> Self {
        Self {
            probes: alloc::vec![probe],
        }
    }

    pub fn push(&mut self, probe: ProbeResult) -> Result<(), VerificationError> {
        if let Some(last) = self.probes.last() {
            if probe.step_index <= last.step_index {
                return Err(VerificationError::NonMonotonicWindow);
            }
        }
        self.probes.push(probe);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    /// The window anchor `t_1`.
    pub fn anchor(&self) -> Option<&ProbeResult> {
        self.probes.first()
    }

    pub fn probes(&self) -> &[ProbeResult] {
        &self.probes
    }
}

/// Extract the contents of the already-opened box from a probe
/// continuation. The suffix ends with `\boxed{`, so the continuation
/// starts at depth 1 and the answer is everything before the brace that
/// returns to depth 0.
pub fn extract_boxed_answer(generated: &str) -> Result<String, VerificationError> {
    let mut depth = 1usize;
    for (idx, c) in generated.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(String::from(&generated[..idx]));
                }
            }
            _ => {}
        }
    }
    Err(VerificationError::ProbeMalformed)
}

/// Geometric mean of token probabilities: `exp(mean(logprobs))`.
pub fn answer_confidence(answer_span_logprobs: &[f64]) -> Result<f64, VerificationError> {
    if answer_span_logprobs.is_empty() {
        return Err(VerificationError::EmptyAnswerSpan);
    }
    let mut sum = 0.0;
    for &lp in answer_span_logprobs {
        if lp > 0.0 {
            return Err(VerificationError::PositiveLogprob(lp));
        }
        sum += lp;
    }
    Ok(mathx::exp(sum / answer_span_logprobs.len() as f64))
}

/// Temperature-scaled softmax over the answer choices, evaluated at the
/// picked choice. The map must contain exactly the available choices.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // negation also rejects NaN
pub fn mc_confidence(
    choice_logprobs: &BTreeMap<String, f64>,
    picked: &str,
    temperature: f64,
) -> Result<f64, VerificationError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(VerificationError::InvalidTemperature(temperature));
    }
    let Some(&picked_lp) = choice_logprobs.get(picked) else {
        return Err(VerificationError::UnknownChoice(String::from(picked)));
    };
    let max = choice_logprobs
        .values()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let denom: f64 = choice_logprobs
        .values()
        .map(|&v| mathx::exp((v - max) / temperature))
        .sum();
    Ok(mathx::exp((picked_lp - max) / temperature) / denom)
}

/// Task-aware answer comparison: exact match after trimming for math and
/// multiple choice, sequence-similarity ratio for code.
pub fn answers_match(a: &str, b: &str, task: TaskKind, cfg: &VerificationConfig) -> bool {
    match task {
        TaskKind::Math | TaskKind::MultipleChoice => a.trim() == b.trim(),
        TaskKind::Code => seqmatch::ratio(a, b) >= cfg.code_match_threshold,
    }
}

/// The exit predicate over a full verification window:
///
/// `[C_1 > lambda] AND [A_l = A_1 for l in 2..=L] AND [C_l >= C_1 - epsilon for l in 2..=L]`
///
/// With `L = 1` the consistency and stability conjuncts are vacuous.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // negated gates reject NaN confidences
pub fn exit_decision(
    window: &VerificationWindow,
    cfg: &VerificationConfig,
    task: TaskKind,
) -> Result<bool, VerificationError> {
    if window.len() != cfg.window_len {
        return Err(VerificationError::WindowSize {
            got: window.len(),
            expected: cfg.window_len,
        });
    }
    let anchor = window.anchor().expect("window_len >= 1 implies non-empty");
    if !(anchor.confidence > cfg.lambda) {
        return Ok(false);
    }
    for later in &window.probes[1..] {
        if !answers_match(&later.answer, &anchor.answer, task, cfg) {
            return Ok(false);
        }
        if !(later.confidence >= anchor.confidence - cfg.epsilon) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn probe(step_index: usize, answer: &str, confidence: f64) -> ProbeResult {
        ProbeResult {
            step_index,
            answer: answer.to_string(),
            confidence,
            probe_tokens: 4,
            raw_token_logprobs: vec![confidence.ln()],
        }
    }

    fn window(probes: Vec<ProbeResult>) -> VerificationWindow {
        let mut w = VerificationWindow::new();
        for p in probes {
            w.push(p).unwrap();
        }
        w
    }

    #[test]
    fn suffixes_are_bit_exact() {
        assert_eq!(
            build_probe_prompt("P", TaskKind::Math),
            "P\n**Final Answer**\n\nThe final answer is \\boxed{"
        );
        assert_eq!(
            build_probe_prompt("P", TaskKind::MultipleChoice),
            "P\n**Final Answer**\n\nThe answer choice is \\boxed{"
        );
        assert_eq!(
            build_probe_prompt("P", TaskKind::Code),
            "P</think>\n\n### Solution Code\n```python\n"
        );
    }

    #[test]
    fn boxed_extraction_simple() {
        assert_eq!(extract_boxed_answer("42}").unwrap(), "42");
    }

    #[test]
    fn boxed_extraction_nested() {
        assert_eq!(
            extract_boxed_answer("\\frac{1}{2}} and so").unwrap(),
            "\\frac{1}{2}"
        );
    }

    #[test]
    fn boxed_extraction_unbalanced() {
        assert_eq!(
            extract_boxed_answer("42 and no closing brace"),
            Err(VerificationError::ProbeMalformed)
        );
    }

    #[test]
    fn confidence_all_certain_tokens() {
        assert_eq!(answer_confidence(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn confidence_half_probability() {
        let lp = 0.5_f64.ln();
        assert!((answer_confidence(&[lp, lp]).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn confidence_geometric_mean() {
        let got = answer_confidence(&[0.9_f64.ln(), 0.4_f64.ln()]).unwrap();
        assert!((got - 0.6).abs() < 1e-9);
    }

    #[test]
    fn confidence_rejects_empty_and_positive() {
        assert_eq!(
            answer_confidence(&[]),
            Err(VerificationError::EmptyAnswerSpan)
        );
        assert_eq!(
            answer_confidence(&[0.5]),
            Err(VerificationError::PositiveLogprob(0.5))
        );
    }

    #[test]
    fn confidence_permutation_invariant() {
        let a = answer_confidence(&[-0.1, -0.7, -0.3]).unwrap();
        let b = answer_confidence(&[-0.7, -0.3, -0.1]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn confidence_unchanged_by_appending_the_mean() {
        let lps = [-0.2, -0.6, -0.1];
        let mean = lps.iter().sum::<f64>() / lps.len() as f64;
        let base = answer_confidence(&lps).unwrap();
        let extended = answer_confidence(&[lps[0], lps[1], lps[2], mean]).unwrap();
        assert!((base - extended).abs() < 1e-12);
    }

    fn choices(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn mc_uniform_choices() {
        let m = choices(&[("A", -2.0), ("B", -2.0), ("C", -2.0), ("D", -2.0)]);
        assert!((mc_confidence(&m, "B", 1.0).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mc_dominant_choice() {
        let m = choices(&[("A", 0.0), ("B", -10.0), ("C", -10.0), ("D", -10.0)]);
        let got = mc_confidence(&m, "A", 1.0).unwrap();
        let expect = 1.0 / (1.0 + 3.0 * (-10.0_f64).exp());
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.99986).abs() < 1e-4);
    }

    #[test]
    fn mc_high_temperature_washes_out() {
        let m = choices(&[("A", 0.0), ("B", -10.0), ("C", -10.0), ("D", -10.0)]);
        let got = mc_confidence(&m, "A", 1e9).unwrap();
        assert!((got - 0.25).abs() < 1e-6);
    }

    #[test]
    fn mc_sums_to_one() {
        let m = choices(&[("A", -0.2), ("B", -3.0), ("C", -1.1), ("D", -7.5)]);
        let sum: f64 = ["A", "B", "C", "D"]
            .iter()
            .map(|c| mc_confidence(&m, c, 0.7).unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mc_unknown_choice_and_bad_temperature() {
        let m = choices(&[("A", 0.0)]);
        assert!(matches!(
            mc_confidence(&m, "E", 1.0),
            Err(VerificationError::UnknownChoice(_))
        ));
        assert!(matches!(
            mc_confidence(&m, "A", 0.0),
            Err(VerificationError::InvalidTemperature(_))
        ));
    }

    #[test]
    fn answers_match_math_exact() {
        let cfg = VerificationConfig::default();
        assert!(answers_match("5", "5", TaskKind::Math, &cfg));
        assert!(answers_match(" 5 ", "5", TaskKind::Math, &cfg));
        assert!(!answers_match("5", "6", TaskKind::Math, &cfg));
    }

    #[test]
    fn answers_match_code_fuzzy() {
        let cfg = VerificationConfig::for_task(TaskKind::Code);
        let a = "def solve():\n    return sum(range(10))\n";
        let b = "def solve():\n    return sum(range(10))";
        assert!(answers_match(a, b, TaskKind::Code, &cfg));
        assert!(!answers_match(
            a,
            "print('unrelated')",
            TaskKind::Code,
            &cfg
        ));
    }

    #[test]
    fn exit_accepts_stable_window() {
        let cfg = VerificationConfig::default();
        let w = window(vec![probe(3, "5", 0.99), probe(4, "5", 0.97)]);
        assert!(
            exit_decision(&w, &cfg, TaskKind::Math).unwrap(),
            "0.97 >= 0.99 - 0.03"
        );
    }

    #[test]
    fn exit_rejects_low_anchor_confidence() {
        let cfg = VerificationConfig::default();
        let w = window(vec![probe(3, "5", 0.97), probe(4, "5", 0.99)]);
        assert!(!exit_decision(&w, &cfg, TaskKind::Math).unwrap());
    }

    #[test]
    fn exit_rejects_answer_mismatch() {
        let cfg = VerificationConfig::default();
        let w = window(vec![probe(3, "5", 1.0), probe(4, "7", 1.0)]);
        assert!(!exit_decision(&w, &cfg, TaskKind::Math).unwrap());
    }

    #[test]
    fn exit_rejects_confidence_drop() {
        let cfg = VerificationConfig::default();
        let w = window(vec![probe(3, "5", 0.99), probe(4, "5", 0.95)]);
        assert!(
            !exit_decision(&w, &cfg, TaskKind::Math).unwrap(),
            "0.95 < 0.99 - 0.03"
        );
    }

    #[test]
    fn exit_window_size_checked() {
        let cfg = VerificationConfig::default();
        let w = window(vec![probe(3, "5", 0.99)]);
        assert_eq!(
            exit_decision(&w, &cfg, TaskKind::Math),
            Err(VerificationError::WindowSize {
                got: 1,
                expected: 2
            })
        );
    }

    #[test]
    fn exit_single_probe_window_reduces_to_lambda_gate() {
        let cfg = VerificationConfig {
            window_len: 1,
            ..VerificationConfig::default()
        };
        let pass = window(vec![probe(3, "5", 0.985)]);
        let fail = window(vec![probe(3, "5", 0.98)]);
        assert!(exit_decision(&pass, &cfg, TaskKind::Math).unwrap());
        assert!(
            !exit_decision(&fail, &cfg, TaskKind::Math).unwrap(),
            "strict > on lambda"
        );
    }

    #[test]
    fn window_rejects_non_monotonic_indices() {
        let mut w = VerificationWindow::anchored(probe(4, "5", 0.9));
        assert_eq!(
            w.push(probe(4, "5", 0.9)),
            Err(VerificationError::NonMonotonicWindow)
        );
        assert_eq!(
            w.push(probe(3, "5", 0.9)),
            Err(VerificationError::NonMonotonicWindow)
        );
        assert!(w.push(probe(5, "5", 0.9)).is_ok());
    }

    #[test]
    fn probe_result_confidence_invariant() {
        let lps = vec![0.8_f64.ln(), 0.9_f64.ln(), 0.7_f64.ln()];
        let p = ProbeResult::from_answer_span(2, "x".to_string(), lps.clone(), 5).unwrap();
        let mean = lps.iter().sum::<f64>() / lps.len() as f64;
        assert!((p.confidence - mean.exp()).abs() < 1e-9);
    }

    #[test]
    fn monotone_in_lambda_and_epsilon() {
        // Lowering lambda or raising epsilon never flips accept -> reject.
        let task = TaskKind::Math;
        let conf = [0.9, 0.95, 0.97, 0.98, 0.99];
        let lambdas = [0.5, 0.9, 0.95, 0.98, 0.99];
        let epsilons = [0.0, 0.01, 0.03, 0.1];
        for &c1 in &conf {
            for &c2 in &conf {
                let w = window(vec![probe(1, "9", c1), probe(2, "9", c2)]);
                for &l1 in &lambdas {
                    for &e1 in &epsilons {
                        let tight = VerificationConfig {
                            lambda: l1,
                            epsilon: e1,
                            ..VerificationConfig::default()
                        };
                        if !exit_decision(&w, &tight, task).unwrap() {
                            continue;
                        }
                        for &l2 in lambdas.iter().filter(|&&l| l <= l1) {
                            for &e2 in epsilons.iter().filter(|&&e| e >= e1) {
                                let loose = VerificationConfig {
                                    lambda: l2,
                                    epsilon: e2,
                                    ..VerificationConfig::default()
                                };
                                assert!(
                                    exit_decision(&w, &loose, task).unwrap(),
                                    "accept at ({l1},{e1}) but reject at ({l2},{e2}) for c=({c1},{c2})"
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}
