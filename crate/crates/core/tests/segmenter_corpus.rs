//! Corpus-level segmenter properties: byte-exact reconstruction, length
//! discipline with its documented exceptions, offline/incremental
//! equivalence, and idempotence, over a deterministic 50-trace corpus.

use puma_core::segmenter::{
    assign_role, is_enumerated, segment, segment_chain, split_paragraphs, IncrementalSegmenter,
    RawSegment, ReasoningStep, SegmenterConfig, StepRole,
};
use puma_core::synthetic::{segmentation_corpus, Xorshift64};

const CORPUS_SEED: u64 = 0x5e6_0001;
const CORPUS_SIZE: usize = 50;

fn corpus() -> Vec<String> {
    segmentation_corpus(CORPUS_SEED, CORPUS_SIZE)
}

#[test]
fn reconstruction_is_byte_exact_on_every_trace() {
    let cfg = SegmenterConfig::default();
    for (i, text) in corpus().iter().enumerate() {
        let chain = segment_chain(text, &cfg).unwrap();
        assert_eq!(&chain.reconstruct(), text, "trace {i}");
    }
}

/// Role of a step's first paragraph, as the merger saw it.
fn first_para_role(step: &ReasoningStep, is_first_step: bool) -> (RawSegment, StepRole) {
    let mut para = split_paragraphs(&step.text)
        .into_iter()
        .next()
        .expect("steps are non-empty");
    para.ordinal = if is_first_step { 0 } else { 1 };
    let role = assign_role(&para);
    (para, role)
}

/// Independent re-statement of the merge-blocking rules: true when the
/// merger was allowed to fold `next`'s opening paragraph into `prev`.
fn merge_was_allowed(
    prev: &ReasoningStep,
    next: &ReasoningStep,
    next_is_first: bool,
    cfg: &SegmenterConfig,
) -> bool {
    let (next_para, next_role) = first_para_role(next, next_is_first);
    if is_enumerated(&next_para.text) {
        return false;
    }
    if !prev.role.compatible(next_role) {
        return false;
    }
    if next_role.is_major_entry() && next_role != prev.role {
        return false;
    }
    if prev.char_len >= cfg.l_min && next_para.char_len >= cfg.l_min {
        return false;
    }
    prev.char_len + prev.sep_after.chars().count() + next_para.char_len <= cfg.l_max
}

#[test]
fn length_discipline_with_documented_exceptions() {
    let cfg = SegmenterConfig::default();
    for (t, text) in corpus().iter().enumerate() {
        let steps = segment(text, &cfg).unwrap();
        for (i, step) in steps.iter().enumerate() {
            // Upper bound: only a single paragraph may exceed l_max
            // (paragraphs are never split internally).
            if step.char_len > cfg.l_max {
                assert_eq!(
                    split_paragraphs(&step.text).len(),
                    1,
                    "trace {t} step {i}: oversized step must be one paragraph"
                );
            }
            // Lower bound: a short step must be unmergeable on both sides.
            if step.char_len < cfg.l_min {
                let is_last = i + 1 == steps.len();
                if let Some(next) = steps.get(i + 1) {
                    assert!(
                        !merge_was_allowed(step, next, false, &cfg),
                        "trace {t} step {i}: short step could merge right"
                    );
                }
                if i > 0 {
                    assert!(
                        !merge_was_allowed(&steps[i - 1], step, false, &cfg),
                        "trace {t} step {i}: short step could merge left"
                    );
                } else if !is_last {
                    // First of several: right-side check above suffices.
                }
                if is_last && i > 0 {
                    // The trailing-step fold must have been blocked.
                    let prev = &steps[i - 1];
                    let fold_ok = !is_enumerated(&step.text)
                        && prev.char_len + prev.sep_after.chars().count() + step.char_len
                            <= cfg.l_max;
                    assert!(
                        !fold_ok,
                        "trace {t}: short final step should have folded into its predecessor"
                    );
                }
            }
        }
    }
}

#[test]
fn incremental_equals_offline_on_every_trace() {
    let cfg = SegmenterConfig::default();
    let mut rng = Xorshift64::new(0xfeed_0002);
    for (t, text) in corpus().iter().enumerate() {
        let offline = segment(text, &cfg).unwrap();

        let mut inc = IncrementalSegmenter::new(cfg).unwrap();
        let mut got = Vec::new();
        let chars: Vec<char> = text.chars().collect();
        let mut pos = 0usize;
        while pos < chars.len() {
            let take = rng.range(1, 17).min(chars.len() - pos);
            let chunk: String = chars[pos..pos + take].iter().collect();
            pos += take;
            got.extend(inc.feed(&chunk));
        }
        got.extend(inc.finish());
        assert_eq!(got, offline, "trace {t}: incremental and offline disagree");
    }
}

#[test]
fn emitted_steps_are_prefix_of_offline_result_mid_stream() {
    // Stop feeding halfway and check the emitted steps match the offline
    // segmentation of the full text, step for step.
    let cfg = SegmenterConfig::default();
    for text in corpus().iter().take(10) {
        let offline = segment(text, &cfg).unwrap();
        let half = {
            let chars: Vec<char> = text.chars().collect();
            let cut = chars.len() / 2;
            chars[..cut].iter().collect::<String>()
        };
        let mut inc = IncrementalSegmenter::new(cfg).unwrap();
        let emitted = inc.feed(&half);
        for (i, step) in emitted.iter().enumerate() {
            assert_eq!(step, &offline[i], "mid-stream step {i} must be final");
        }
    }
}

#[test]
fn segmenting_reconstruction_is_idempotent() {
    let cfg = SegmenterConfig::default();
    for text in corpus().iter().take(20) {
        let chain = segment_chain(text, &cfg).unwrap();
        let again = segment_chain(&chain.reconstruct(), &cfg).unwrap();
        assert_eq!(chain, again);
    }
}

#[test]
fn retained_plus_emitted_always_covers_input() {
    let cfg = SegmenterConfig::default();
    let mut rng = Xorshift64::new(0xfeed_0003);
    for text in corpus().iter().take(15) {
        let mut inc = IncrementalSegmenter::new(cfg).unwrap();
        let mut emitted_text = String::new();
        let chars: Vec<char> = text.chars().collect();
        let mut pos = 0usize;
        let mut fed = String::new();
        while pos < chars.len() {
            let take = rng.range(1, 23).min(chars.len() - pos);
            let chunk: String = chars[pos..pos + take].iter().collect();
            pos += take;
            fed.push_str(&chunk);
            for step in inc.feed(&chunk) {
                emitted_text.push_str(&step.text);
                emitted_text.push_str(&step.sep_after);
            }
            let mut covered = String::from(inc.leading());
            covered.push_str(&emitted_text);
            covered.push_str(&inc.retained());
            assert_eq!(
                covered, fed,
                "emitted + retained must cover all input fed so far"
            );
        }
    }
}
