//! Command implementations behind the CLI surface. Each returns the number
//! of per-item errors; the process exits nonzero when any occurred.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use puma_core::analyzer::{self, ExportRow, LabeledEpisode, SweepGrid};
use puma_core::backends::{HashEmbedder, ReplayBackend, TraceRecord};
use puma_core::controller::{run, token_reduction, EpisodeResult, ExitKind};
use puma_core::synthetic::demo_trace;
use puma_core::verification::{answers_match, VerificationConfig};
use serde::Serialize;

use crate::config::ResolvedConfig;
use crate::http::{EndpointConfig, HttpEmbeddingBackend, HttpGenerationBackend};
use crate::jsonl::{
    file_digest, read_episodes, read_traces, InputDigest, JsonlWriter, OutputHeader, ReplaySummary,
};
use crate::report::{
    cdf_csv_rows, csv_sidecar, sweep_csv_rows, write_csv, write_report, ReportDoc, CDF_CSV_HEADER,
    SWEEP_CSV_HEADER,
};

fn header_for(config: &ResolvedConfig, inputs: &[&Path]) -> Result<OutputHeader> {
    let mut digests = Vec::with_capacity(inputs.len());
    for path in inputs {
        digests.push(InputDigest {
            path: path.display().to_string(),
            digest: file_digest(path)?,
        });
    }
    Ok(OutputHeader {
        config: config.clone(),
        inputs: digests,
    })
}

fn trace_matcher(trace: &TraceRecord) -> VerificationConfig {
    VerificationConfig::for_task(trace.task)
}

/// Run one episode over a trace with the local deterministic embedder.
fn replay_episode(trace: &TraceRecord, config: &ResolvedConfig) -> Result<EpisodeResult> {
    let backend = ReplayBackend::new(trace.clone())?;
    let embedder = HashEmbedder::new(config.embedding.dim)?;
    let mut cfg = config.puma.clone();
    cfg.task = trace.task;
    run(&trace.id, &trace.question, &backend, &embedder, &cfg).map_err(|e| anyhow!("{e}"))
}

/// Replay every trace in a JSONL file; one episode line per trace plus a
/// summary footer.
pub fn cmd_replay(traces_path: &Path, out_path: &Path, config: &ResolvedConfig) -> Result<usize> {
    let (traces, line_errors) = read_traces(traces_path)?;
    let mut errors = line_errors.len();
    for e in &line_errors {
        eprintln!("warning: {e}");
    }

    let mut writer = JsonlWriter::create(out_path)?;
    writer.header(&header_for(config, &[traces_path])?)?;

    let mut summary = ReplaySummary {
        episodes: 0,
        errors: 0,
        accuracy: None,
        mean_token_reduction: None,
        verified_exits: 0,
        loop_breaker_exits: 0,
        full_reasoning: 0,
        safety_capped: 0,
    };
    let mut with_gold = 0usize;
    let mut correct = 0usize;
    let mut reductions: Vec<f64> = Vec::new();

    for trace in &traces {
        let episode = match replay_episode(trace, config) {
            Ok(ep) => ep,
            Err(e) => {
                eprintln!("warning: trace {}: {e}", trace.id);
                errors += 1;
                continue;
            }
        };
        summary.episodes += 1;
        match episode.exit_kind {
            ExitKind::VerifiedExit => summary.verified_exits += 1,
            ExitKind::LoopBreakerExit => summary.loop_breaker_exits += 1,
            ExitKind::FullReasoning => summary.full_reasoning += 1,
        }
        if episode.hit_safety_cap {
            summary.safety_capped += 1;
        }
        if let Some(gold) = trace.gold_answer.as_ref() {
            with_gold += 1;
            if answers_match(
                &episode.final_answer,
                gold,
                trace.task,
                &trace_matcher(trace),
            ) {
                correct += 1;
            }
        }
        if let Ok(tr) = token_reduction(episode.total_tokens as f64, trace.total_tokens as f64) {
            reductions.push(tr);
        }
        writer.record(&episode)?;
    }

    if with_gold > 0 {
        summary.accuracy = Some(correct as f64 / with_gold as f64);
    }
    if !reductions.is_empty() {
        summary.mean_token_reduction =
            Some(reductions.iter().sum::<f64>() / reductions.len() as f64);
    }
    summary.errors = errors;
    writer.summary(&summary)?;
    writer.finish()?;
    Ok(errors)
}

/// Run a single live (or stub/replay) episode for one question.
pub fn cmd_run(
    question: &str,
    question_id: &str,
    backend_name: &str,
    traces_path: Option<&Path>,
    out_path: &Path,
    config: &ResolvedConfig,
) -> Result<usize> {
    let episode = match backend_name {
        "stub" => {
            let trace = demo_trace(question_id);
            let backend = ReplayBackend::new(trace)?;
            let embedder = HashEmbedder::new(config.embedding.dim)?;
            run(question_id, question, &backend, &embedder, &config.puma)
                .map_err(|e| anyhow!("{e}"))?
        }
        "replay" => {
            let path = traces_path.context("--backend replay requires --traces")?;
            let (traces, _) = read_traces(path)?;
            let trace = traces
                .into_iter()
                .next()
                .context("trace file holds no valid records")?;
            replay_episode(&trace, config)?
        }
        "http" => {
            let endpoint = EndpointConfig::from_env("PUMA_GEN").context(
                "http backend needs PUMA_GEN_BASE_URL (and optionally PUMA_GEN_MODEL, PUMA_GEN_API_KEY)",
            )?;
            let backend = HttpGenerationBackend::new(endpoint, config.generation.clone());
            if let Some(embed_endpoint) = EndpointConfig::from_env("PUMA_EMBED") {
                let embedder = HttpEmbeddingBackend::new(embed_endpoint);
                run(question_id, question, &backend, &embedder, &config.puma)
                    .map_err(|e| anyhow!("{e}"))?
            } else {
                let embedder = HashEmbedder::new(config.embedding.dim)?;
                run(question_id, question, &backend, &embedder, &config.puma)
                    .map_err(|e| anyhow!("{e}"))?
            }
        }
        other => bail!("unknown backend {other:?}; expected http, replay, or stub"),
    };

    let mut writer = JsonlWriter::create(out_path)?;
    let inputs: Vec<&Path> = traces_path.into_iter().collect();
    writer.header(&header_for(config, &inputs)?)?;
    writer.record(&episode)?;
    writer.summary(&serde_json::json!({
        "episodes": 1,
        "exit_kind": episode.exit_kind,
        "total_tokens": episode.total_tokens,
    }))?;
    writer.finish()?;
    println!(
        "{}: {:?} at step {} of {}; tokens: {} reasoning + {} probe + {} answer = {}",
        episode.question_id,
        episode.exit_kind,
        episode.stop_step,
        episode.steps_total_emitted,
        episode.reasoning_tokens,
        episode.probe_tokens,
        episode.answer_tokens,
        episode.total_tokens
    );
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SignalsReport {
    confidence: puma_core::analyzer::SignalFailureReport,
    consistency: puma_core::analyzer::SignalFailureReport,
    confidence_sweep: Vec<puma_core::analyzer::SweepPoint>,
    consistency_sweep: Vec<puma_core::analyzer::SweepPoint>,
}

#[derive(Debug, Serialize)]
struct CounterfactualSide {
    failed: usize,
    premature: usize,
    premature_fraction: f64,
    /// True when no exits failed, leaving the fraction undefined.
    undefined_denominator: bool,
}

#[derive(Debug, Serialize)]
struct CounterfactualReport {
    confidence: CounterfactualSide,
    consistency: CounterfactualSide,
}

#[derive(Debug, Serialize)]
struct StepSavingsPair {
    id: String,
    original_steps: usize,
    stopped_steps: usize,
    savings_percent: f64,
}

#[derive(Debug, Serialize)]
struct StepSavingsReport {
    mean_savings_percent: f64,
    pairs: Vec<StepSavingsPair>,
    unmatched_episodes: usize,
}

/// Dispatch an offline analysis and write its report plus CSV sidecar.
pub fn cmd_analyze(
    kind: &str,
    traces_path: &Path,
    episodes_path: Option<&Path>,
    out_path: &Path,
    lambda: f64,
    consecutive: usize,
    config: &ResolvedConfig,
) -> Result<usize> {
    let (traces, line_errors) = read_traces(traces_path)?;
    for e in &line_errors {
        eprintln!("warning: {e}");
    }
    let mut errors = line_errors.len();
    let csv_path = csv_sidecar(out_path);

    match kind {
        "overthink" => {
            let report = analyzer::overthinking_fractions(&traces);
            errors += report.skipped_no_trials;
            for t in traces.iter().filter(|t| t.steps.iter().all(|s| s.trial_answer.is_none())) {
                eprintln!("warning: trace {} has no trial answers; skipped", t.id);
            }
            write_csv(&csv_path, CDF_CSV_HEADER, &cdf_csv_rows(&report.golden_position_cdf))?;
            let mut inputs = vec![traces_path];
            inputs.dedup();
            write_report(out_path, &ReportDoc { header: header_for(config, &inputs)?, report })?;
        }
        "signals" => {
            let confidence = analyzer::confidence_signal_failures(&traces, lambda);
            let consistency = analyzer::consistency_signal_failures(&traces, consecutive);
            let confidence_sweep = analyzer::threshold_sweep(&traces, &SweepGrid::default_confidence());
            let consistency_sweep = analyzer::threshold_sweep(&traces, &SweepGrid::default_consistency());
            let mut rows = sweep_csv_rows("confidence", &confidence_sweep);
            rows.extend(sweep_csv_rows("consistency", &consistency_sweep));
            write_csv(&csv_path, SWEEP_CSV_HEADER, &rows)?;
            let report = SignalsReport { confidence, consistency, confidence_sweep, consistency_sweep };
            write_report(out_path, &ReportDoc { header: header_for(config, &[traces_path])?, report })?;
        }
        "counterfactual" => {
            let confidence = analyzer::confidence_signal_failures(&traces, lambda);
            let consistency = analyzer::consistency_signal_failures(&traces, consecutive);
            let side = |r: &puma_core::analyzer::SignalFailureReport| CounterfactualSide {
                failed: r.failed_count,
                premature: r.premature_count,
                premature_fraction: r.premature_fraction,
                undefined_denominator: r.premature_undefined,
            };
            let report = CounterfactualReport { confidence: side(&confidence), consistency: side(&consistency) };
            write_csv(
                &csv_path,
                "signal,failed,premature,premature_fraction",
                &[
                    format!(
                        "confidence,{},{},{:.6}",
                        report.confidence.failed, report.confidence.premature, report.confidence.premature_fraction
                    ),
                    format!(
                        "consistency,{},{},{:.6}",
                        report.consistency.failed, report.consistency.premature, report.consistency.premature_fraction
                    ),
                ],
            )?;
            write_report(out_path, &ReportDoc { header: header_for(config, &[traces_path])?, report })?;
        }
        "steps" => {
            let episodes_path = episodes_path.context("--kind steps requires --episodes")?;
            let (episodes, ep_errors) = read_episodes(episodes_path)?;
            for e in &ep_errors {
                eprintln!("warning: {e}");
            }
            errors += ep_errors.len();
            let mut pairs = Vec::new();
            let mut rows = Vec::new();
            let mut unmatched = 0usize;
            for episode in &episodes {
                let Some(trace) = traces.iter().find(|t| t.id == episode.question_id) else {
                    eprintln!("warning: episode {} has no matching trace", episode.question_id);
                    unmatched += 1;
                    errors += 1;
                    continue;
                };
                let original = trace.steps.len();
                let stopped = episode.stop_step;
                let savings = (original as f64 - stopped as f64) / original as f64 * 100.0;
                rows.push(format!("{},{original},{stopped},{savings:.6}", trace.id));
                pairs.push(StepSavingsPair {
                    id: trace.id.clone(),
                    original_steps: original,
                    stopped_steps: stopped,
                    savings_percent: savings,
                });
            }
            let pair_tuples: Vec<(usize, usize)> =
                pairs.iter().map(|p| (p.original_steps, p.stopped_steps)).collect();
            let mean = analyzer::step_savings(&pair_tuples)?;
            write_csv(&csv_path, "id,original_steps,stopped_steps,savings_percent", &rows)?;
            let report = StepSavingsReport { mean_savings_percent: mean, pairs, unmatched_episodes: unmatched };
            write_report(
                out_path,
                &ReportDoc { header: header_for(config, &[traces_path, episodes_path])?, report },
            )?;
        }
        other => bail!("unknown analysis kind {other:?}; expected overthink, signals, counterfactual, or steps"),
    }
    Ok(errors)
}

#[derive(Debug, Serialize)]
struct SweepReport {
    signal: String,
    points: Vec<puma_core::analyzer::SweepPoint>,
}

/// Sweep one stopping signal over a parameter grid.
pub fn cmd_sweep(
    signal: &str,
    grid_spec: Option<&str>,
    traces_path: &Path,
    out_path: &Path,
    config: &ResolvedConfig,
) -> Result<usize> {
    let (traces, line_errors) = read_traces(traces_path)?;
    for e in &line_errors {
        eprintln!("warning: {e}");
    }
    let grid = match signal {
        "confidence" => match grid_spec {
            None => SweepGrid::default_confidence(),
            Some(spec) => SweepGrid::Confidence(
                spec.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|e| anyhow!("bad grid value {s:?}: {e}"))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        },
        "consistency" => match grid_spec {
            None => SweepGrid::default_consistency(),
            Some(spec) => SweepGrid::Consistency(
                spec.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|e| anyhow!("bad grid value {s:?}: {e}"))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        },
        other => bail!("unknown signal {other:?}; expected confidence or consistency"),
    };
    let points = analyzer::threshold_sweep(&traces, &grid);
    write_csv(
        &csv_sidecar(out_path),
        SWEEP_CSV_HEADER,
        &sweep_csv_rows(signal, &points),
    )?;
    let report = SweepReport {
        signal: signal.to_string(),
        points,
    };
    write_report(
        out_path,
        &ReportDoc {
            header: header_for(config, &[traces_path])?,
            report,
        },
    )?;
    Ok(line_errors.len())
}

/// Pair episodes with their traces and correctness labels.
fn label_episodes(
    episodes: Vec<EpisodeResult>,
    traces: &[TraceRecord],
) -> (Vec<LabeledEpisode>, usize) {
    let mut labeled = Vec::new();
    let mut skipped = 0usize;
    for episode in episodes {
        let Some(trace) = traces.iter().find(|t| t.id == episode.question_id) else {
            eprintln!(
                "warning: episode {} has no matching trace; skipped",
                episode.question_id
            );
            skipped += 1;
            continue;
        };
        let Some(gold) = trace.gold_answer.as_ref() else {
            eprintln!("warning: trace {} has no gold answer; skipped", trace.id);
            skipped += 1;
            continue;
        };
        let matcher = trace_matcher(trace);
        labeled.push(LabeledEpisode {
            question: trace.question.clone(),
            episode_correct: answers_match(&episode.final_answer, gold, trace.task, &matcher),
            full_correct: answers_match(&trace.final_answer, gold, trace.task, &matcher),
            full_steps: trace.steps.len(),
            full_reasoning: trace.reasoning_text(),
            episode,
        });
    }
    (labeled, skipped)
}

/// Export stopping-supervision training rows.
pub fn cmd_export(
    kind: &str,
    traces_path: &Path,
    episodes_path: &Path,
    out_path: &Path,
    ratio_cap: f64,
    config: &ResolvedConfig,
) -> Result<usize> {
    let (traces, trace_errors) = read_traces(traces_path)?;
    let (episodes, episode_errors) = read_episodes(episodes_path)?;
    for e in trace_errors.iter().chain(&episode_errors) {
        eprintln!("warning: {e}");
    }
    let mut errors = trace_errors.len() + episode_errors.len();

    let (labeled, skipped) = label_episodes(episodes, &traces);
    errors += skipped;

    let rows: Vec<ExportRow> = match kind {
        "sft" => analyzer::export_sft(&labeled, ratio_cap),
        "dpo" => analyzer::export_dpo(&labeled),
        "grpo" => analyzer::export_grpo(&labeled, &traces),
        other => bail!("unknown export kind {other:?}; expected sft, dpo, or grpo"),
    };

    let mut writer = JsonlWriter::create(out_path)?;
    writer.header(&header_for(config, &[traces_path, episodes_path])?)?;
    for row in &rows {
        writer.record(row)?;
    }
    writer.summary(&serde_json::json!({ "rows": rows.len(), "skipped": skipped }))?;
    writer.finish()?;
    println!(
        "exported {} {kind} rows to {}",
        rows.len(),
        out_path.display()
    );
    Ok(errors)
}
