//! Offline diagnostics over recorded traces and episode records:
//! golden-step overthinking splits, answer-level signal failure rates,
//! premature-exit counterfactuals, threshold sweeps, step savings, and
//! training-row export with the group-rank reward.

use alloc::string::String;
use alloc::vec::Vec;

use crate::backends::TraceRecord;
use crate::controller::{EpisodeResult, ExitKind};
use crate::verification::{answers_match, TaskKind, VerificationConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyzerError {
    #[error("step-savings pair has non-positive original step count")]
    NonPositiveOriginalSteps,
    #[error("step-savings input is empty")]
    EmptyInput,
    #[error("rank bonus group must have exactly 4 members, got {0}")]
    BadGroupSize(usize),
    #[error("rank bonus {0} is not one of +0.5, +0.25, 0, -0.25")]
    BadRankBonus(f64),
}

/// Match rule used throughout the analyzer: the trace's task decides it.
fn matches(a: &str, b: &str, task: TaskKind) -> bool {
    answers_match(a, b, task, &VerificationConfig::for_task(task))
}

/// Earliest step (one-based) whose trial answer matches the trace's final
/// answer; `None` when no step matches or no trial answers exist.
pub fn golden_step(trace: &TraceRecord) -> Option<usize> {
    trace.steps.iter().enumerate().find_map(|(i, step)| {
        step.trial_answer
            .as_ref()
            .filter(|t| matches(t, &trace.final_answer, trace.task))
            .map(|_| i + 1)
    })
}

/// Per-trace golden-step token split.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceGolden {
    pub id: String,
    /// One-based golden step, when any trial answer matches the final.
    pub golden_index: Option<usize>,
    /// Reasoning tokens up to and including the golden step.
    pub pre_answer_tokens: usize,
    /// Reasoning tokens after the golden step.
    pub post_answer_tokens: usize,
    /// Golden position as a fraction of chain length, in (0, 1].
    pub position_fraction: Option<f64>,
}

/// Corpus-level golden-step report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GoldenStepReport {
    pub per_trace: Vec<TraceGolden>,
    /// Traces skipped because they carry no trial answers at all.
    pub skipped_no_trials: usize,
    /// Traces with trial answers but no golden step.
    pub no_golden: usize,
    /// `sum(post) / sum(pre + post)` over traces with a golden step.
    pub post_answer_fraction: f64,
    /// Sorted golden positions (fraction of chain length); the empirical
    /// CDF of where chains first reach their final answer.
    pub golden_position_cdf: Vec<f64>,
}

/// Golden-step analysis over a corpus.
pub fn overthinking_fractions(traces: &[TraceRecord]) -> GoldenStepReport {
    let mut per_trace = Vec::with_capacity(traces.len());
    let mut skipped_no_trials = 0usize;
    let mut no_golden = 0usize;
    let mut pre_total = 0usize;
    let mut post_total = 0usize;
    let mut cdf = Vec::new();

    for trace in traces {
        if trace.steps.iter().all(|s| s.trial_answer.is_none()) {
            skipped_no_trials += 1;
            continue;
        }
        let golden = golden_step(trace);
        let (pre, post) = match golden {
            Some(g) => {
                let pre: usize = trace.steps[..g].iter().map(|s| s.token_count).sum();
                let post: usize = trace.steps[g..].iter().map(|s| s.token_count).sum();
                (pre, post)
            }
            None => {
                no_golden += 1;
                (trace.reasoning_tokens(), 0)
            }
        };
        if let Some(g) = golden {
            pre_total += pre;
            post_total += post;
            cdf.push(g as f64 / trace.steps.len() as f64);
        }
        per_trace.push(TraceGolden {
            id: trace.id.clone(),
            golden_index: golden,
            pre_answer_tokens: pre,
            post_answer_tokens: post,
            position_fraction: golden.map(|g| g as f64 / trace.steps.len() as f64),
        });
    }
    cdf.sort_by(|a, b| a.partial_cmp(b).expect("fractions are finite"));
    let denom = pre_total + post_total;
    GoldenStepReport {
        per_trace,
        skipped_no_trials,
        no_golden,
        post_answer_fraction: if denom > 0 {
            post_total as f64 / denom as f64
        } else {
            0.0
        },
        golden_position_cdf: cdf,
    }
}

/// Which answer-level signal a failure report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SignalKind {
    Confidence,
    Consistency,
}

/// The swept/queried trigger parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SignalParameter {
    Lambda(f64),
    ConsecutiveCount(usize),
}

/// Per-trace outcome of retroactively applying a stopping signal.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SignalOutcome {
    pub trace_id: String,
    /// First step (one-based) where the signal triggered.
    pub trigger_step: Option<usize>,
    pub trigger_answer: Option<String>,
    /// Trigger answer does not match the gold answer.
    pub failed: bool,
    /// Failed, but the full chain ends correct: stopping here would have
    /// prevented a later self-correction.
    pub premature: bool,
}

/// Failure-rate report for one signal at one operating point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SignalFailureReport {
    pub signal: SignalKind,
    pub parameter: SignalParameter,
    /// Traces (with gold answers) where the signal triggered.
    pub triggered_count: usize,
    pub failed_count: usize,
    /// `failed / triggered`; 0 when nothing triggered.
    pub failure_rate: f64,
    pub premature_count: usize,
    /// `premature / failed`; 0 when nothing failed.
    pub premature_fraction: f64,
    /// True when the premature fraction's denominator was zero.
    pub premature_undefined: bool,
    /// Traces skipped for lack of a gold answer.
    pub skipped_no_gold: usize,
    pub outcomes: Vec<SignalOutcome>,
}

fn first_confidence_trigger(trace: &TraceRecord, lambda: f64) -> Option<usize> {
    trace.steps.iter().enumerate().find_map(|(i, s)| {
        s.trial_confidence
            .filter(|c| *c > lambda)
            .and(s.trial_answer.as_ref())
            .map(|_| i + 1)
    })
}

fn first_consistency_trigger(trace: &TraceRecord, k: usize) -> Option<usize> {
    debug_assert!(k >= 1);
    let mut run_answer: Option<&str> = None;
    let mut run_len = 0usize;
    for (i, step) in trace.steps.iter().enumerate() {
        match step.trial_answer.as_deref() {
            None => {
                run_answer = None;
                run_len = 0;
            }
            Some(a) => {
                if run_answer.is_some_and(|prev| matches(prev, a, trace.task)) {
                    run_len += 1;
                } else {
                    run_answer = Some(a);
                    run_len = 1;
                }
                if run_len >= k {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn build_signal_report(
    traces: &[TraceRecord],
    signal: SignalKind,
    parameter: SignalParameter,
    trigger: impl Fn(&TraceRecord) -> Option<usize>,
) -> SignalFailureReport {
    let mut outcomes = Vec::new();
    let mut skipped_no_gold = 0usize;
    let mut triggered = 0usize;
    let mut failed = 0usize;
    let mut premature = 0usize;

    for trace in traces {
        let Some(gold) = trace.gold_answer.as_ref() else {
            skipped_no_gold += 1;
            continue;
        };
        let trigger_step = trigger(trace);
        let trigger_answer = trigger_step.and_then(|t| trace.steps[t - 1].trial_answer.clone());
        let mut is_failed = false;
        let mut is_premature = false;
        if let Some(ans) = trigger_answer.as_ref() {
            triggered += 1;
            if !matches(ans, gold, trace.task) {
                is_failed = true;
                failed += 1;
                if matches(&trace.final_answer, gold, trace.task) {
                    is_premature = true;
                    premature += 1;
                }
            }
        }
        outcomes.push(SignalOutcome {
            trace_id: trace.id.clone(),
            trigger_step,
            trigger_answer,
            failed: is_failed,
            premature: is_premature,
        });
    }

    SignalFailureReport {
        signal,
        parameter,
        triggered_count: triggered,
        failed_count: failed,
        failure_rate: if triggered > 0 {
            failed as f64 / triggered as f64
        } else {
            0.0
        },
        premature_count: premature,
        premature_fraction: if failed > 0 {
            premature as f64 / failed as f64
        } else {
            0.0
        },
        premature_undefined: failed == 0,
        skipped_no_gold,
        outcomes,
    }
}

/// Retroactive confidence-based stopping: first step whose trial
/// confidence strictly exceeds `lambda`; a failure is a trigger whose
/// trial answer mismatches gold.
pub fn confidence_signal_failures(traces: &[TraceRecord], lambda: f64) -> SignalFailureReport {
    build_signal_report(
        traces,
        SignalKind::Confidence,
        SignalParameter::Lambda(lambda),
        |t| first_confidence_trigger(t, lambda),
    )
}

/// Retroactive consistency-based stopping: the trigger is the step ending
/// the first run of `k` identical consecutive trial answers (inclusive).
pub fn consistency_signal_failures(traces: &[TraceRecord], k: usize) -> SignalFailureReport {
    build_signal_report(
        traces,
        SignalKind::Consistency,
        SignalParameter::ConsecutiveCount(k),
        |t| first_consistency_trigger(t, k),
    )
}

/// Fraction of failed exits whose full chain ends correct. The flag in the
/// pair is true when the denominator (failed exits) was zero.
pub fn premature_fraction(outcomes: &[SignalOutcome]) -> (f64, bool) {
    let failed = outcomes.iter().filter(|o| o.failed).count();
    if failed == 0 {
        return (0.0, true);
    }
    let premature = outcomes.iter().filter(|o| o.premature).count();
    (premature as f64 / failed as f64, false)
}

/// One operating point of a threshold sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub parameter: SignalParameter,
    pub failure_rate: f64,
    /// Retained-reasoning-token reduction, in percent. Retroactive sweeps
    /// count retained reasoning tokens only (probes are hypothetical), so
    /// this is not comparable with an episode's total-cost reduction.
    pub token_reduction: f64,
    pub triggered_count: usize,
}

/// Sweep grid over one signal family.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepGrid {
    Confidence(Vec<f64>),
    Consistency(Vec<usize>),
}

impl SweepGrid {
    /// The default confidence grid.
    pub fn default_confidence() -> Self {
        SweepGrid::Confidence(alloc::vec![0.93, 0.94, 0.95, 0.96, 0.97])
    }

    /// The default consistency grid.
    pub fn default_consistency() -> Self {
        SweepGrid::Consistency((1..=8).collect())
    }
}

fn sweep_tokens(
    traces: &[TraceRecord],
    trigger: impl Fn(&TraceRecord) -> Option<usize>,
) -> (usize, usize) {
    let mut stopped = 0usize;
    let mut full = 0usize;
    for trace in traces {
        let total = trace.reasoning_tokens();
        full += total;
        stopped += match trigger(trace) {
            Some(t) => trace.steps[..t].iter().map(|s| s.token_count).sum(),
            None => total,
        };
    }
    (stopped, full)
}

/// Sweep a signal over a parameter grid; each point reports the failure
/// rate and the retained-token reduction if every trace stopped at its
/// first trigger (untriggered traces contribute their full length).
pub fn threshold_sweep(traces: &[TraceRecord], grid: &SweepGrid) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    match grid {
        SweepGrid::Confidence(lambdas) => {
            for &lambda in lambdas {
                let report = confidence_signal_failures(traces, lambda);
                let (stopped, full) = sweep_tokens(traces, |t| first_confidence_trigger(t, lambda));
                points.push(SweepPoint {
                    parameter: SignalParameter::Lambda(lambda),
                    failure_rate: report.failure_rate,
                    token_reduction: reduction_percent(stopped, full),
                    triggered_count: report.triggered_count,
                });
            }
        }
        SweepGrid::Consistency(ks) => {
            for &k in ks {
                let report = consistency_signal_failures(traces, k);
                let (stopped, full) = sweep_tokens(traces, |t| first_consistency_trigger(t, k));
                points.push(SweepPoint {
                    parameter: SignalParameter::ConsecutiveCount(k),
                    failure_rate: report.failure_rate,
                    token_reduction: reduction_percent(stopped, full),
                    triggered_count: report.triggered_count,
                });
            }
        }
    }
    points
}

fn reduction_percent(stopped: usize, full: usize) -> f64 {
    if full == 0 {
        return 0.0;
    }
    (1.0 - stopped as f64 / full as f64) * 100.0
}

/// Mean percentage of reasoning steps saved across `(original, stopped)`
/// pairs.
pub fn step_savings(pairs: &[(usize, usize)]) -> Result<f64, AnalyzerError> {
    if pairs.is_empty() {
        return Err(AnalyzerError::EmptyInput);
    }
    let mut sum = 0.0;
    for &(orig, stopped) in pairs {
        if orig == 0 {
            return Err(AnalyzerError::NonPositiveOriginalSteps);
        }
        sum += (orig as f64 - stopped as f64) / orig as f64 * 100.0;
    }
    Ok(sum / pairs.len() as f64)
}

/// A training-data export row.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum ExportRow {
    /// Supervised target: the truncated chain and its (correct) answer.
    Sft {
        question: String,
        reasoning: String,
        answer: String,
    },
    /// Preference pair: truncated chain preferred over the full chain.
    Dpo {
        question: String,
        chosen: String,
        rejected: String,
    },
    /// Rollout prompt: question plus a reasoning prefix ending in the
    /// closing think tag; the model is trained to generate the answer
    /// phase that follows.
    Grpo { question: String, prefix: String },
}

/// An episode paired with its source trace and correctness labels; the
/// export filters work off this view.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEpisode {
    pub question: String,
    pub episode: EpisodeResult,
    /// Step count of the uninterrupted chain.
    pub full_steps: usize,
    /// Full chain text (used as the rejected side of preference pairs).
    pub full_reasoning: String,
    /// Episode answer matches gold.
    pub episode_correct: bool,
    /// Full chain's final answer matches gold.
    pub full_correct: bool,
}

/// Supervised rows: verified exits, correct answers, and aggressive
/// compression (`stop_step / full_steps < ratio_cap`).
pub fn export_sft(episodes: &[LabeledEpisode], ratio_cap: f64) -> Vec<ExportRow> {
    episodes
        .iter()
        .filter(|e| e.episode.exit_kind == ExitKind::VerifiedExit)
        .filter(|e| e.episode_correct)
        .filter(|e| {
            e.full_steps > 0 && (e.episode.stop_step as f64 / e.full_steps as f64) < ratio_cap
        })
        .map(|e| ExportRow::Sft {
            question: e.question.clone(),
            reasoning: e.episode.retained_prefix.clone(),
            answer: e.episode.final_answer.clone(),
        })
        .collect()
}

/// Preference pairs: truncated chain (chosen) vs full chain (rejected),
/// kept only when both are correct.
pub fn export_dpo(episodes: &[LabeledEpisode]) -> Vec<ExportRow> {
    episodes
        .iter()
        .filter(|e| e.episode_correct && e.full_correct)
        .map(|e| ExportRow::Dpo {
            question: e.question.clone(),
            chosen: e.episode.retained_prefix.clone(),
            rejected: e.full_reasoning.clone(),
        })
        .collect()
}

/// Rollout prompts: one row per probed candidate position, with the prefix
/// truncated there and the closing think tag appended.
pub fn export_grpo(episodes: &[LabeledEpisode], traces: &[TraceRecord]) -> Vec<ExportRow> {
    let mut rows = Vec::new();
    for labeled in episodes {
        let Some(trace) = traces.iter().find(|t| t.id == labeled.episode.question_id) else {
            continue;
        };
        for probe in &labeled.episode.probes {
            if probe.step_index == 0 || probe.step_index > trace.steps.len() {
                continue;
            }
            let mut prefix = String::new();
            for (i, step) in trace.steps[..probe.step_index].iter().enumerate() {
                if i > 0 {
                    prefix.push_str("\n\n");
                }
                prefix.push_str(&step.text);
            }
            prefix.push_str("</think>");
            rows.push(ExportRow::Grpo {
                question: labeled.question.clone(),
                prefix,
            });
        }
    }
    rows
}

pub const RANK_BONUSES: [f64; 4] = [0.5, 0.25, 0.0, -0.25];
const REWARD_LENGTH_SCALE: f64 = 4096.0;

/// Rollout reward: `r_correct * (1 + 0.5 * (1 - len/4096)) + r_rank`.
/// Lengths above 4096 make the parenthesized bonus negative, as written.
pub fn grpo_reward(
    correct: bool,
    length_tokens: usize,
    rank_bonus: f64,
) -> Result<f64, AnalyzerError> {
    if !RANK_BONUSES.contains(&rank_bonus) {
        return Err(AnalyzerError::BadRankBonus(rank_bonus));
    }
    let r_correct = if correct { 1.0 } else { 0.0 };
    Ok(r_correct * (1.0 + 0.5 * (1.0 - length_tokens as f64 / REWARD_LENGTH_SCALE)) + rank_bonus)
}

/// Within-group rank bonuses for a group of four rollouts: correct
/// trajectories, shortest first, receive +0.5, +0.25, 0, -0.25; incorrect
/// trajectories receive -0.25. Length ties break by group position.
pub fn rank_bonuses(group: &[(bool, usize)]) -> Result<Vec<f64>, AnalyzerError> {
    if group.len() != 4 {
        return Err(AnalyzerError::BadGroupSize(group.len()));
    }
    let mut correct_order: Vec<usize> = (0..4).filter(|&i| group[i].0).collect();
    correct_order.sort_by_key(|&i| (group[i].1, i));
    let mut out = alloc::vec![-0.25f64; 4];
    for (rank, &idx) in correct_order.iter().enumerate() {
        out[idx] = RANK_BONUSES[rank];
    }
    Ok(out)
}
