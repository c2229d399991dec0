//! End-to-end episodes over the replay backend: exit-kind behavior, token
//! accounting, prefix preservation, and determinism.

use puma_core::backends::{EmbeddingBackend, GenerationBackend, HashEmbedder, ReplayBackend};
use puma_core::controller::{run, ExitKind, PumaConfig};
use puma_core::synthetic::{synthetic_trace, TraceShape};

const EMBED_DIM: usize = 128;

fn embedder() -> HashEmbedder {
    HashEmbedder::new(EMBED_DIM).unwrap()
}

fn all_novel_trace(steps: usize, tokens_per_step: usize) -> puma_core::backends::TraceRecord {
    synthetic_trace(
        0xabc_0001,
        &TraceShape {
            id: "novel".to_string(),
            steps,
            redundant_tail: 0,
            trials: vec![],
            final_answer: "17".to_string(),
            gold_answer: Some("17".to_string()),
            tokens_per_step,
        },
    )
}

/// Eight steps; 6 and 7 are near-duplicates of their predecessors and
/// carry consistent, confident trial answers, so the default config takes
/// a verified exit at step 7.
fn redundant_tail_trace() -> puma_core::backends::TraceRecord {
    let mut trials = vec![None; 8];
    trials[5] = Some(("5".to_string(), 0.99));
    trials[6] = Some(("5".to_string(), 0.98));
    synthetic_trace(
        0xabc_0002,
        &TraceShape {
            id: "tail".to_string(),
            steps: 8,
            redundant_tail: 3,
            trials,
            final_answer: "5".to_string(),
            gold_answer: Some("5".to_string()),
            tokens_per_step: 20,
        },
    )
}

#[test]
fn all_novel_trace_runs_to_full_reasoning() {
    let trace = all_novel_trace(10, 15);
    let backend = ReplayBackend::new(trace.clone()).unwrap();
    let cfg = PumaConfig::default();
    let episode = run("novel", &trace.question, &backend, &embedder(), &cfg).unwrap();

    assert_eq!(episode.exit_kind, ExitKind::FullReasoning);
    assert_eq!(episode.steps_total_emitted, 10);
    assert_eq!(episode.stop_step, 10);
    assert!(
        episode.probes.is_empty(),
        "no candidate may be flagged on novel steps"
    );
    assert_eq!(episode.probe_tokens, 0);
    assert_eq!(
        episode.reasoning_tokens, 150,
        "all recorded step tokens retained"
    );
    assert_eq!(
        episode.answer_tokens, 2,
        "closing probe: answer token plus brace"
    );
    assert_eq!(episode.total_tokens, 150 + 2);
    assert_eq!(
        episode.final_answer, "17",
        "closing probe returns the recorded final answer"
    );
    assert!(!episode.hit_safety_cap);
}

#[test]
fn redundant_tail_takes_verified_exit_with_exact_accounting() {
    let trace = redundant_tail_trace();
    let backend = ReplayBackend::new(trace.clone()).unwrap();
    let cfg = PumaConfig::default();
    let episode = run("tail", &trace.question, &backend, &embedder(), &cfg).unwrap();

    assert_eq!(episode.exit_kind, ExitKind::VerifiedExit);
    assert_eq!(
        episode.stop_step, 7,
        "window anchored at step 6 completes at step 7"
    );
    assert_eq!(episode.steps_total_emitted, 7, "step 8 is never processed");
    assert_eq!(episode.probes.len(), 2);
    assert_eq!(episode.probes[0].step_index, 6);
    assert_eq!(episode.probes[1].step_index, 7);
    assert_eq!(
        episode.final_answer, "5",
        "verified exit reuses the anchor's answer"
    );
    assert_eq!(episode.reasoning_tokens, 7 * 20);
    assert_eq!(
        episode.probe_tokens,
        2 + 2,
        "two probes, each one answer token plus brace"
    );
    assert_eq!(
        episode.answer_tokens, 0,
        "the stored probe continuation is reused"
    );
    assert_eq!(episode.total_tokens, 140 + 4);

    // Prefix preservation: byte-exact prefix of the uninterrupted stream.
    let full_text = trace.reasoning_text();
    assert!(full_text.starts_with(&episode.retained_prefix));
    let expected_prefix: String = trace.steps[..7]
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    assert_eq!(episode.retained_prefix, expected_prefix);
}

#[test]
fn unreachable_lambda_and_disabled_breaker_run_full() {
    let trace = redundant_tail_trace();
    let backend = ReplayBackend::new(trace.clone()).unwrap();
    let mut cfg = PumaConfig::default();
    // Confidence is capped at 1.0 and the gate is strict, so lambda = 1.0
    // can never pass; the loop breaker is disabled by default.
    cfg.verification.lambda = 1.0;
    assert!(cfg.loop_breaker.m.is_none());
    let episode = run("tail", &trace.question, &backend, &embedder(), &cfg).unwrap();

    assert_eq!(episode.exit_kind, ExitKind::FullReasoning);
    assert_eq!(episode.stop_step, 8);
    assert!(
        !episode.probes.is_empty(),
        "candidates are still probed, they just never verify"
    );
    assert_eq!(episode.final_answer, "5");
}

#[test]
fn no_redundancy_neutrality_full_output_plus_one_probe() {
    let trace = all_novel_trace(6, 30);
    let backend = ReplayBackend::new(trace.clone()).unwrap();
    let mut cfg = PumaConfig::default();
    cfg.loop_breaker.m = None;
    let episode = run("novel", &trace.question, &backend, &embedder(), &cfg).unwrap();

    assert_eq!(episode.exit_kind, ExitKind::FullReasoning);
    assert_eq!(episode.retained_prefix, trace.reasoning_text());
    assert_eq!(
        episode.total_tokens,
        trace.reasoning_tokens() + episode.answer_tokens
    );
    assert_eq!(episode.probe_tokens, 0);
}

#[test]
fn prefix_preservation_across_replay_episodes() {
    for seed in 1..=8u64 {
        let tail = (seed % 3) as usize;
        let steps = 5 + (seed % 4) as usize;
        let trace = synthetic_trace(
            seed,
            &TraceShape {
                id: format!("t{seed}"),
                steps,
                redundant_tail: tail.min(steps - 1),
                trials: (0..steps)
                    .map(|i| Some((format!("{}", i % 2), 0.9)))
                    .collect(),
                final_answer: "1".to_string(),
                gold_answer: None,
                tokens_per_step: 12,
            },
        );
        let backend = ReplayBackend::new(trace.clone()).unwrap();
        let cfg = PumaConfig::default();
        let episode = run(&trace.id, &trace.question, &backend, &embedder(), &cfg).unwrap();
        let full = trace.reasoning_text();
        assert!(
            full.starts_with(&episode.retained_prefix),
            "retained prefix must be a byte-exact prefix of the stream (seed {seed})"
        );
        assert_eq!(
            episode.total_tokens,
            episode.reasoning_tokens + episode.probe_tokens + episode.answer_tokens
        );
        assert!(episode.stop_step <= episode.steps_total_emitted);
    }
}

#[test]
fn replay_is_deterministic() {
    let trace = redundant_tail_trace();
    let backend = ReplayBackend::new(trace.clone()).unwrap();
    let cfg = PumaConfig::default();
    let a = run("tail", &trace.question, &backend, &embedder(), &cfg).unwrap();
    let b = run("tail", &trace.question, &backend, &embedder(), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loop_breaker_fires_only_after_activation_threshold() {
    // Sixty near-identical steps, every step from the second on is
    // redundant; a confident probe is recorded early. With m = 1 the
    // fallback can fire at the first redundant step after step 50.
    let steps = 60usize;
    let trials: Vec<Option<(String, f64)>> = (0..steps)
        .map(|i| {
            if i == 1 {
                Some(("9".to_string(), 0.95))
            } else {
                None
            }
        })
        .collect();
    let trace = synthetic_trace(
        0xabc_0003,
        &TraceShape {
            id: "adversarial".to_string(),
            steps,
            redundant_tail: steps - 1,
            trials,
            final_answer: "9".to_string(),
            gold_answer: Some("9".to_string()),
            tokens_per_step: 8,
        },
    );
    let backend = ReplayBackend::new(trace.clone()).unwrap();

    let mut cfg = PumaConfig::default();
    cfg.loop_breaker.m = Some(1);
    // Keep verification from exiting first: unreachable anchor gate.
    cfg.verification.lambda = 1.0;
    let episode = run("adv", &trace.question, &backend, &embedder(), &cfg).unwrap();
    assert_eq!(episode.exit_kind, ExitKind::LoopBreakerExit);
    assert_eq!(
        episode.stop_step, 51,
        "strictly more than min_steps steps required"
    );
    assert_eq!(
        episode.final_answer, "9",
        "loop breaker returns the best probe's answer"
    );

    // Disabled fallback (m absent): the same stream runs to full reasoning.
    let mut cfg_off = PumaConfig::default();
    cfg_off.verification.lambda = 1.0;
    cfg_off.loop_breaker.m = None;
    let episode_off = run("adv", &trace.question, &backend, &embedder(), &cfg_off).unwrap();
    assert_eq!(episode_off.exit_kind, ExitKind::FullReasoning);
    assert_eq!(episode_off.stop_step, 60);
}

#[test]
fn safety_cap_on_steps_records_full_reasoning_with_flag() {
    let trace = all_novel_trace(10, 10);
    let backend = ReplayBackend::new(trace.clone()).unwrap();
    let cfg = PumaConfig {
        max_steps: 4,
        ..PumaConfig::default()
    };
    let episode = run("capped", &trace.question, &backend, &embedder(), &cfg).unwrap();
    assert_eq!(episode.exit_kind, ExitKind::FullReasoning);
    assert!(episode.hit_safety_cap);
    assert_eq!(episode.steps_total_emitted, 4);
}

#[test]
fn safety_cap_on_tokens_records_full_reasoning_with_flag() {
    let trace = all_novel_trace(10, 50);
    let backend = ReplayBackend::new(trace.clone()).unwrap();
    let cfg = PumaConfig {
        max_total_tokens: 120,
        ..PumaConfig::default()
    };
    let episode = run("capped", &trace.question, &backend, &embedder(), &cfg).unwrap();
    assert_eq!(episode.exit_kind, ExitKind::FullReasoning);
    assert!(episode.hit_safety_cap);
    assert!(episode.steps_total_emitted < 10);
}

#[test]
fn cancelling_stream_mid_flight_stops_promptly() {
    let trace = all_novel_trace(5, 40);
    let backend = ReplayBackend::new(trace).unwrap();
    let mut stream = backend.stream("q").unwrap();
    assert!(stream.next_event().is_some());
    assert!(stream.next_event().is_some());
    stream.cancel();
    assert!(stream.next_event().is_none());
}

#[test]
fn scripted_episode_survives_malformed_probe() {
    use puma_core::backends::{ProbeScript, ProbeToken, ScriptedBackend, ScriptedStep};

    // Four long steps, the last three near-identical so each is flagged.
    // The probe at step 2 is malformed (no closing brace); the window
    // discards it and the pair at steps 3 and 4 exits.
    let base: String = (0..30)
        .map(|i| format!("token{i} "))
        .collect::<String>()
        .repeat(2);
    let steps = vec![
        ScriptedStep::new(format!("opening thoughts {base}"), 10),
        ScriptedStep::new(format!("repeat block {base}"), 10),
        ScriptedStep::new(format!("repeat block {base}x"), 10),
        ScriptedStep::new(format!("repeat block {base}xy"), 10),
    ];
    let backend = ScriptedBackend::new(steps)
        .with_probe(
            2,
            ProbeScript::Raw(vec![ProbeToken::new("no brace here", -0.4)]),
        )
        .with_probe(3, ProbeScript::boxed("11", 0.99))
        .with_probe(4, ProbeScript::boxed("11", 0.99));
    let cfg = PumaConfig::default();
    let episode = run("scripted", "q", &backend, &embedder(), &cfg).unwrap();
    assert_eq!(episode.exit_kind, ExitKind::VerifiedExit);
    assert_eq!(episode.stop_step, 4);
    assert_eq!(episode.final_answer, "11");
    assert_eq!(
        episode.probes.len(),
        2,
        "the malformed probe carries no answer"
    );
    assert!(
        episode.probe_tokens > 4,
        "malformed probe tokens still count"
    );
}

#[test]
fn backends_are_share_safe_across_episodes() {
    fn assert_share_safe<T: Send + Sync>(_: &T) {}
    let trace = all_novel_trace(4, 5);
    let backend = ReplayBackend::new(trace.clone()).unwrap();
    let embed = embedder();
    assert_share_safe(&backend);
    assert_share_safe(&embed);

    // Concurrent episodes over the same shared backends.
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for i in 0..4 {
            let backend = &backend;
            let embed = &embed;
            handles.push(scope.spawn(move || {
                let cfg = PumaConfig::default();
                run(&format!("e{i}"), "q", backend, embed, &cfg).unwrap()
            }));
        }
        let episodes: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        for pair in episodes.windows(2) {
            assert_eq!(pair[0].exit_kind, pair[1].exit_kind);
            assert_eq!(pair[0].total_tokens, pair[1].total_tokens);
        }
    });
}

#[test]
fn hash_embedder_separates_fixture_pairs() {
    // Near-duplicate pairs must score above unrelated pairs across a
    // fixed 50-pair corpus.
    let embedder = embedder();
    let mut rng = puma_core::synthetic::Xorshift64::new(0xcafe_0001);
    let corpus = puma_core::synthetic::segmentation_corpus(0xcafe_0002, 51);
    for i in 0..50 {
        let base: String = corpus[i].chars().take(400).collect();
        let near = format!("{base} ");
        let unrelated: String = corpus[i + 1].chars().skip(100).take(500).collect();
        let e_base = embedder.embed(&base).unwrap();
        let e_near = embedder.embed(&near).unwrap();
        let e_far = embedder.embed(&unrelated).unwrap();
        let near_sim = puma_core::redundancy::cosine(&e_base, &e_near).unwrap();
        let far_sim = puma_core::redundancy::cosine(&e_base, &e_far).unwrap();
        assert!(
            near_sim > far_sim,
            "pair {i}: near {near_sim} should beat far {far_sim}"
        );
        let _ = rng.next_u64();
    }
}
