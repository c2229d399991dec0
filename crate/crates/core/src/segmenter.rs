//! Reasoning-step segmentation.
//!
//! Raw chain-of-thought text is split at blank-line boundaries, each
//! paragraph gets a coarse semantic role from string-level cues, and
//! adjacent short paragraphs with compatible roles are merged toward a
//! target step-length range. Separators are retained so that joining the
//! emitted steps reproduces the source text byte for byte.
//!
//! Two entry points share the same merge rules: [`segment`] runs offline
//! over complete text, and [`IncrementalSegmenter`] consumes a stream and
//! emits a step only once its boundary is certain (a later blank line, or
//! end of stream). Both modes produce identical output for identical input.

use alloc::string::String;
use alloc::vec::Vec;

/// A blank-line boundary is a maximal whitespace run containing at least
/// this many newline characters.
const BOUNDARY_NEWLINES: usize = 2;

/// Shortest conceivable merge partner: a two-newline separator plus one
/// content character. Used when deciding whether a group can still grow.
const MIN_GROWTH_CHARS: usize = 3;

/// Segmentation errors.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SegmenterError {
    /// Configuration violates `0 < l_min < l_max`.
    #[error("invalid segmenter config: l_min={l_min}, l_max={l_max} (need 0 < l_min < l_max)")]
    InvalidConfig { l_min: usize, l_max: usize },
}

/// Target step-length range, in characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SegmenterConfig {
    /// Segments shorter than this are merge candidates.
    pub l_min: usize,
    /// Merged steps never exceed this length (single paragraphs may).
    pub l_max: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            l_min: 200,
            l_max: 1000,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<(), SegmenterError> {
        if self.l_min == 0 || self.l_min >= self.l_max {
            return Err(SegmenterError::InvalidConfig {
                l_min: self.l_min,
                l_max: self.l_max,
            });
        }
        Ok(())
    }
}

/// Coarse semantic role of a segment, assigned from string-level cues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StepRole {
    ProblemSetup,
    Calculation,
    SelfCorrection,
    Verification,
    Conclusion,
    General,
}

impl StepRole {
    /// Two roles may share a step iff they are equal or either is `General`.
    pub fn compatible(self, other: StepRole) -> bool {
        self == other || self == StepRole::General || other == StepRole::General
    }

    /// Entering one of these roles is a step boundary regardless of length.
    pub fn is_major_entry(self) -> bool {
        matches!(self, StepRole::SelfCorrection | StepRole::Conclusion)
    }
}

/// One pre-merge paragraph: a maximal run of text between blank-line
/// boundaries, trimmed of surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSegment {
    /// Zero-based position among the paragraphs of the chain.
    pub ordinal: usize,
    /// Paragraph text. Never empty, never starts or ends with whitespace;
    /// may contain single newlines.
    pub text: String,
    /// Character count of `text`.
    pub char_len: usize,
    /// Verbatim bytes between this paragraph's text and the next
    /// paragraph's text (or end of input). Contains the blank-line
    /// boundary plus any trimmed whitespace.
    pub sep_after: String,
}

/// Full-fidelity split: `leading` holds any whitespace before the first
/// paragraph, so `leading + Σ(text + sep_after)` equals the input exactly.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitText {
    pub leading: String,
    pub segments: Vec<RawSegment>,
}

impl SplitText {
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.leading.len());
        out.push_str(&self.leading);
        for seg in &self.segments {
            out.push_str(&seg.text);
            out.push_str(&seg.sep_after);
        }
        out
    }
}

/// One merged reasoning step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReasoningStep {
    /// One-based position in the chain.
    pub index: usize,
    /// Step text, including any blank-line separators between merged
    /// paragraphs.
    pub text: String,
    pub role: StepRole,
    /// Character count of `text`.
    pub char_len: usize,
    /// Token count. Offline segmentation fills in `ceil(char_len / 4)` as a
    /// documented approximation; streaming callers overwrite it from
    /// backend token events.
    pub token_count: usize,
    /// Verbatim bytes between this step's text and the next step's text
    /// (or end of input).
    pub sep_after: String,
}

/// A segmented chain with enough metadata to reproduce its source text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentedChain {
    /// Whitespace preceding the first step, if any.
    pub leading: String,
    pub steps: Vec<ReasoningStep>,
}

impl SegmentedChain {
    pub fn reconstruct(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.leading);
        for step in &self.steps {
            out.push_str(&step.text);
            out.push_str(&step.sep_after);
        }
        out
    }
}

/// Offline token approximation used when no tokenizer events are available.
pub fn approx_token_count(char_len: usize) -> usize {
    char_len.div_ceil(4)
}

fn is_sep_char(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\r' | '\n')
}

/// Split text at blank-line boundaries, keeping every byte: separators are
/// attached to the preceding paragraph and leading whitespace is returned
/// separately.
pub fn split_text(text: &str) -> SplitText {
    let mut out = SplitText::default();
    if text.is_empty() {
        return out;
    }

    // Alternating scan: contents are runs of non-boundary text, boundaries
    // are maximal whitespace runs with >= 2 newlines. Whitespace runs with
    // fewer newlines stay inside the paragraph unless they touch either end.
    let bytes_len = text.len();
    let mut chars = text.char_indices().peekable();
    let mut ws_start: Option<usize> = None;
    let mut ws_newlines = 0usize;
    let mut boundaries: Vec<(usize, usize)> = Vec::new(); // byte ranges of boundary runs

    while let Some((idx, c)) = chars.next() {
        let end = idx + c.len_utf8();
        if is_sep_char(c) {
            if ws_start.is_none() {
                ws_start = Some(idx);
                ws_newlines = 0;
            }
            if c == '\n' {
                ws_newlines += 1;
            }
            let run_ends = chars
                .peek()
                .map(|(_, nc)| !is_sep_char(*nc))
                .unwrap_or(true);
            if run_ends {
                let start = ws_start.take().unwrap();
                if ws_newlines >= BOUNDARY_NEWLINES {
                    boundaries.push((start, end));
                }
                ws_newlines = 0;
            }
        } else {
            ws_start = None;
        }
    }

    // Carve paragraphs out of the gaps between boundary runs, trimming
    // whitespace at the edges into the adjoining separators.
    let mut cursor = 0usize;
    let mut ordinal = 0usize;
    let mut push_chunk =
        |out: &mut SplitText, chunk_start: usize, chunk_end: usize, sep: (usize, usize)| {
            let chunk = &text[chunk_start..chunk_end];
            let trimmed = chunk.trim_matches(is_sep_char);
            if trimmed.is_empty() {
                // Whitespace-only chunk: fold into the surrounding separator.
                let run = &text[chunk_start..sep.1];
                if let Some(last) = out.segments.last_mut() {
                    last.sep_after.push_str(run);
                } else {
                    out.leading.push_str(run);
                }
                return;
            }
            let t_start = chunk_start + (trimmed.as_ptr() as usize - chunk.as_ptr() as usize);
            let t_end = t_start + trimmed.len();
            // Leading slack joins the previous separator (or the chain leading).
            if t_start > chunk_start {
                let slack = &text[chunk_start..t_start];
                if let Some(last) = out.segments.last_mut() {
                    last.sep_after.push_str(slack);
                } else {
                    out.leading.push_str(slack);
                }
            }
            out.segments.push(RawSegment {
                ordinal,
                text: String::from(trimmed),
                char_len: trimmed.chars().count(),
                sep_after: String::from(&text[t_end..sep.1]),
            });
            ordinal += 1;
        };

    for &(b_start, b_end) in &boundaries {
        push_chunk(&mut out, cursor, b_start, (b_start, b_end));
        cursor = b_end;
    }
    if cursor < bytes_len {
        push_chunk(&mut out, cursor, bytes_len, (bytes_len, bytes_len));
    }
    out
}

/// Split text at blank-line boundaries into pre-merge paragraphs.
pub fn split_paragraphs(text: &str) -> Vec<RawSegment> {
    split_text(text).segments
}

const SELF_CORRECTION_PREFIXES: &[&str] = &["wait", "hmm", "actually", "no, "];
const VERIFICATION_CUES: &[&str] = &[
    "let me verify",
    "let me check",
    "double-check",
    "to confirm",
];
const CONCLUSION_PREFIXES: &[&str] = &["therefore", "thus"];
const CONCLUSION_CUES: &[&str] = &["so the answer", "final answer"];

fn is_mathy_char(c: char) -> bool {
    c.is_ascii_digit()
        || matches!(
            c,
            '+' | '-'
                | '*'
                | '/'
                | '='
                | '^'
                | '_'
                | '<'
                | '>'
                | '%'
                | '|'
                | '\\'
                | '('
                | ')'
                | '{'
                | '}'
                | '['
                | ']'
        )
}

fn looks_like_calculation(text: &str) -> bool {
    if text.contains("$$") || text.contains("\\[") || text.contains("\\(") {
        return true;
    }
    let mut non_space = 0usize;
    let mut mathy = 0usize;
    for c in text.chars() {
        if c.is_whitespace() {
            continue;
        }
        non_space += 1;
        if is_mathy_char(c) {
            mathy += 1;
        }
    }
    non_space > 0 && mathy * 10 >= non_space * 3
}

/// True for paragraphs that open with an enumeration marker: `1.`, `- `,
/// `* `, or `Step N`. These never merge into their predecessor.
pub fn is_enumerated(text: &str) -> bool {
    let t = text.trim_start();
    if t.starts_with("- ") || t.starts_with("* ") {
        return true;
    }
    let mut it = t.chars().peekable();
    let mut saw_digit = false;
    while let Some(&c) = it.peek() {
        if c.is_ascii_digit() {
            saw_digit = true;
            it.next();
        } else {
            break;
        }
    }
    if saw_digit {
        if let Some(&c) = it.peek() {
            // "1. foo" and "2) foo" count; "3.14" does not.
            if c == '.' || c == ')' {
                it.next();
                return match it.peek() {
                    None => true,
                    Some(&n) => n.is_whitespace(),
                };
            }
        } else {
            return false;
        }
    }
    let lower = lowercase_prefix(t, 8);
    if lower.starts_with("step ") {
        return t.chars().nth(5).is_some_and(|c| c.is_ascii_digit());
    }
    false
}

fn lowercase_prefix(text: &str, max_chars: usize) -> String {
    text.chars()
        .take(max_chars)
        .flat_map(char::to_lowercase)
        .collect()
}

fn contains_ci(text: &str, needle: &str) -> bool {
    // Cue strings are ASCII; a byte-wise scan is enough.
    let hay = text.as_bytes();
    let pat = needle.as_bytes();
    if pat.len() > hay.len() {
        return false;
    }
    hay.windows(pat.len()).any(|w| w.eq_ignore_ascii_case(pat))
}

fn starts_with_ci(text: &str, prefix: &str) -> bool {
    let hay = text.as_bytes();
    let pat = prefix.as_bytes();
    hay.len() >= pat.len() && hay[..pat.len()].eq_ignore_ascii_case(pat)
}

/// Assign a coarse semantic role from the fixed cue table.
///
/// Priority: self-correction and conclusion prefixes, verification cues,
/// calculation density, then problem setup for the opening paragraph;
/// `General` otherwise.
pub fn assign_role(segment: &RawSegment) -> StepRole {
    let text = segment.text.as_str();
    if SELF_CORRECTION_PREFIXES
        .iter()
        .any(|p| starts_with_ci(text, p))
    {
        return StepRole::SelfCorrection;
    }
    if VERIFICATION_CUES.iter().any(|c| contains_ci(text, c)) {
        return StepRole::Verification;
    }
    if CONCLUSION_PREFIXES.iter().any(|p| starts_with_ci(text, p))
        || CONCLUSION_CUES.iter().any(|c| contains_ci(text, c))
    {
        return StepRole::Conclusion;
    }
    if looks_like_calculation(text) {
        return StepRole::Calculation;
    }
    if segment.ordinal == 0 {
        return StepRole::ProblemSetup;
    }
    StepRole::General
}

/// An in-progress merged step.
#[derive(Debug, Clone)]
struct Group {
    text: String,
    char_len: usize,
    role: StepRole,
    enumerated: bool,
    /// Separator following the group's last paragraph.
    sep_after: String,
}

impl Group {
    fn new(seg: &RawSegment, role: StepRole) -> Self {
        Self {
            text: seg.text.clone(),
            char_len: seg.char_len,
            role,
            enumerated: is_enumerated(&seg.text),
            sep_after: seg.sep_after.clone(),
        }
    }

    fn absorb(&mut self, seg: &RawSegment, role: StepRole) {
        self.char_len += self.sep_after.chars().count() + seg.char_len;
        self.text.push_str(&self.sep_after);
        self.text.push_str(&seg.text);
        self.sep_after = seg.sep_after.clone();
        if self.role == StepRole::General {
            self.role = role;
        }
    }

    /// Length of this group if `seg` were absorbed.
    fn merged_len(&self, seg: &RawSegment) -> usize {
        self.char_len + self.sep_after.chars().count() + seg.char_len
    }

    fn into_step(self, index: usize) -> ReasoningStep {
        ReasoningStep {
            index,
            char_len: self.char_len,
            token_count: approx_token_count(self.char_len),
            role: self.role,
            text: self.text,
            sep_after: self.sep_after,
        }
    }
}

/// Whether `seg` may join the open group under the merge rules.
fn can_merge(group: &Group, seg: &RawSegment, role: StepRole, cfg: &SegmenterConfig) -> bool {
    if is_enumerated(&seg.text) {
        return false;
    }
    if !group.role.compatible(role) {
        return false;
    }
    if role.is_major_entry() && role != group.role {
        return false;
    }
    if group.char_len >= cfg.l_min && seg.char_len >= cfg.l_min {
        return false;
    }
    group.merged_len(seg) <= cfg.l_max
}

/// Whether a trailing step shorter than `l_min` may fold into `prev`.
/// Role boundaries do not apply here; enumeration and the length cap do.
fn tail_merge_allowed(prev: &Group, last: &Group, cfg: &SegmenterConfig) -> bool {
    last.char_len < cfg.l_min
        && !last.enumerated
        && prev.char_len + prev.sep_after.chars().count() + last.char_len <= cfg.l_max
}

fn group_segments(
    segments: &[RawSegment],
    roles: &[StepRole],
    cfg: &SegmenterConfig,
) -> Vec<Group> {
    let mut groups: Vec<Group> = Vec::new();
    for (seg, &role) in segments.iter().zip(roles) {
        match groups.last_mut() {
            Some(open) if can_merge(open, seg, role, cfg) => open.absorb(seg, role),
            _ => groups.push(Group::new(seg, role)),
        }
    }
    groups
}

fn apply_tail_rule(groups: &mut Vec<Group>, cfg: &SegmenterConfig) {
    if groups.len() >= 2 {
        let last = groups.last().unwrap();
        let prev = &groups[groups.len() - 2];
        if tail_merge_allowed(prev, last, cfg) {
            let last = groups.pop().unwrap();
            let prev = groups.last_mut().unwrap();
            prev.char_len += prev.sep_after.chars().count() + last.char_len;
            prev.text.push_str(&prev.sep_after);
            prev.text.push_str(&last.text);
            prev.sep_after = last.sep_after;
        }
    }
}

/// Merge role-tagged paragraphs into reasoning steps.
///
/// Enumerated paragraphs and major role transitions start new steps;
/// adjacent short paragraphs with compatible roles merge while the result
/// stays within `l_max`; a trailing step shorter than `l_min` folds into
/// its predecessor when the cap allows.
pub fn merge_segments(
    segments: &[RawSegment],
    roles: &[StepRole],
    cfg: &SegmenterConfig,
) -> Result<Vec<ReasoningStep>, SegmenterError> {
    cfg.validate()?;
    assert_eq!(segments.len(), roles.len(), "one role per segment");
    let mut groups = group_segments(segments, roles, cfg);
    apply_tail_rule(&mut groups, cfg);
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| g.into_step(i + 1))
        .collect())
}

/// Offline segmentation: split, assign roles, merge.
pub fn segment(text: &str, cfg: &SegmenterConfig) -> Result<Vec<ReasoningStep>, SegmenterError> {
    Ok(segment_chain(text, cfg)?.steps)
}

/// Offline segmentation keeping the leading whitespace for byte-exact
/// reconstruction.
pub fn segment_chain(text: &str, cfg: &SegmenterConfig) -> Result<SegmentedChain, SegmenterError> {
    let split = split_text(text);
    let roles: Vec<StepRole> = split.segments.iter().map(assign_role).collect();
    let steps = merge_segments(&split.segments, &roles, cfg)?;
    Ok(SegmentedChain {
        leading: split.leading,
        steps,
    })
}

/// Streaming segmenter.
///
/// Feed arbitrary chunks of text; steps come out once their boundaries are
/// certain. A step is held back while a later paragraph could still merge
/// into it, so that the emitted sequence is always a prefix of what offline
/// [`segment`] would produce on the full text. [`finish`](Self::finish)
/// flushes the remainder; afterwards the total output equals the offline
/// result exactly.
#[derive(Debug, Clone)]
pub struct IncrementalSegmenter {
    cfg: SegmenterConfig,
    /// Raw bytes not yet carved into complete paragraphs.
    tail: String,
    /// Whitespace before the first paragraph.
    leading: String,
    saw_content: bool,
    /// Closed-but-unemitted merged groups, oldest first.
    groups: Vec<Group>,
    next_ordinal: usize,
    next_index: usize,
    /// Total bytes of `leading` plus emitted steps (text + separators).
    emitted_bytes: usize,
    finished: bool,
}

impl IncrementalSegmenter {
    pub fn new(cfg: SegmenterConfig) -> Result<Self, SegmenterError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tail: String::new(),
            leading: String::new(),
            saw_content: false,
            groups: Vec::new(),
            next_ordinal: 0,
            next_index: 1,
            emitted_bytes: 0,
            finished: false,
        })
    }

    /// Whitespace observed before the first paragraph. Stable once the
    /// first step has been emitted.
    pub fn leading(&self) -> &str {
        &self.leading
    }

    /// Everything fed so far that has not been emitted as steps:
    /// closed-but-held groups, their separators, and the undecided tail.
    pub fn retained(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            out.push_str(&g.text);
            out.push_str(&g.sep_after);
        }
        out.push_str(&self.tail);
        out
    }

    /// Byte offset (into the full stream) where the next unemitted step's
    /// text region begins; the leading whitespace counts toward the first
    /// step's region.
    pub fn emitted_bytes(&self) -> usize {
        self.emitted_bytes
    }

    /// Append a chunk of stream text and return any newly certain steps.
    pub fn feed(&mut self, chunk: &str) -> Vec<ReasoningStep> {
        assert!(!self.finished, "feed after finish");
        self.tail.push_str(chunk);
        self.consume_complete_paragraphs();
        self.drain_safe()
    }

    /// Declare end of stream and flush all remaining steps.
    pub fn finish(&mut self) -> Vec<ReasoningStep> {
        assert!(!self.finished, "finish called twice");
        self.finished = true;
        self.consume_complete_paragraphs();
        // The tail is now final: whatever content it holds is the last
        // paragraph, and trailing whitespace is its separator.
        let tail = core::mem::take(&mut self.tail);
        let trimmed = tail.trim_matches(is_sep_char);
        if trimmed.is_empty() {
            self.push_sep_bytes(&tail);
        } else {
            let t_start = trimmed.as_ptr() as usize - tail.as_ptr() as usize;
            let t_end = t_start + trimmed.len();
            self.absorb_paragraph(&tail[..t_start], trimmed, &tail[t_end..]);
        }
        apply_tail_rule(&mut self.groups, &self.cfg);
        let mut out = Vec::with_capacity(self.groups.len());
        for g in core::mem::take(&mut self.groups) {
            out.push(self.emit(g));
        }
        out
    }

    /// Route stray whitespace bytes to the previous separator (or the
    /// chain leading when no paragraph has arrived yet).
    fn push_sep_bytes(&mut self, run: &str) {
        if run.is_empty() {
            return;
        }
        match self.groups.last_mut() {
            Some(last) => last.sep_after.push_str(run),
            None => self.leading.push_str(run),
        }
    }

    fn absorb_paragraph(&mut self, pre_slack: &str, text: &str, sep: &str) {
        self.push_sep_bytes(pre_slack);
        self.saw_content = true;
        let seg = RawSegment {
            ordinal: self.next_ordinal,
            text: String::from(text),
            char_len: text.chars().count(),
            sep_after: String::from(sep),
        };
        self.next_ordinal += 1;
        let role = assign_role(&seg);
        match self.groups.last_mut() {
            Some(open) if can_merge(open, &seg, role, &self.cfg) => open.absorb(&seg, role),
            _ => self.groups.push(Group::new(&seg, role)),
        }
    }

    /// Carve complete paragraphs out of the tail. A paragraph is complete
    /// once a blank-line boundary followed by a non-whitespace character
    /// has been seen (the boundary itself can no longer grow).
    fn consume_complete_paragraphs(&mut self) {
        while let Some((content_end, sep_end)) = self.find_complete_boundary() {
            let tail = core::mem::take(&mut self.tail);
            let chunk = &tail[..content_end];
            let trimmed = chunk.trim_matches(is_sep_char);
            if trimmed.is_empty() {
                // Pure whitespace before the boundary (only possible at the
                // very start of the stream).
                self.push_sep_bytes(&tail[..sep_end]);
            } else {
                let t_start = trimmed.as_ptr() as usize - chunk.as_ptr() as usize;
                let t_end = t_start + trimmed.len();
                let (pre, text, sep) = (&tail[..t_start], trimmed, &tail[t_end..sep_end]);
                self.absorb_paragraph(pre, text, sep);
            }
            self.tail = String::from(&tail[sep_end..]);
        }
    }

    /// Find the first finalized blank-line boundary in the tail: returns
    /// `(content_end, sep_end)` where `sep_end` points at a non-whitespace
    /// character.
    fn find_complete_boundary(&self) -> Option<(usize, usize)> {
        let text = self.tail.as_str();
        let mut ws_start: Option<usize> = None;
        let mut newlines = 0usize;
        for (idx, c) in text.char_indices() {
            if is_sep_char(c) {
                if ws_start.is_none() {
                    ws_start = Some(idx);
                    newlines = 0;
                }
                if c == '\n' {
                    newlines += 1;
                }
            } else {
                if let Some(start) = ws_start {
                    if newlines >= BOUNDARY_NEWLINES {
                        return Some((start, idx));
                    }
                }
                ws_start = None;
            }
        }
        None
    }

    /// Emit closed groups whose final form is certain.
    fn drain_safe(&mut self) -> Vec<ReasoningStep> {
        let mut out = Vec::new();
        loop {
            let emit = match self.groups.len() {
                0 => false,
                // Alone: safe once no future paragraph could merge in. That
                // also rules the group out as a tail-merge endpoint.
                1 => !self.group_can_grow(&self.groups[0]),
                // One successor: the successor is still open; hold this
                // group only while it could become the target of the
                // trailing-step merge.
                2 => !self.tail_merge_possible(&self.groups[0], &self.groups[1]),
                // Two or more successors: the trailing rule can never reach
                // this far back.
                _ => true,
            };
            if !emit {
                break;
            }
            let g = self.groups.remove(0);
            out.push(self.emit(g));
        }
        out
    }

    fn emit(&mut self, g: Group) -> ReasoningStep {
        self.emitted_bytes += g.text.len() + g.sep_after.len();
        if self.next_index == 1 {
            self.emitted_bytes += self.leading.len();
        }
        let step = g.into_step(self.next_index);
        self.next_index += 1;
        step
    }

    /// Could any future paragraph still merge into this group? A future
    /// paragraph can always be non-enumerated and role-compatible, so only
    /// the length rules can rule growth out.
    fn group_can_grow(&self, g: &Group) -> bool {
        if g.char_len + MIN_GROWTH_CHARS > self.cfg.l_max {
            return false;
        }
        g.char_len < self.cfg.l_min || self.cfg.l_min > 1
    }

    /// Could the open group `last` end up as the chain's final step and
    /// fold back into `prev`? Its length only grows, so once it clears
    /// `l_min` (or the cap blocks the merge, or it is enumerated) the
    /// answer is final.
    fn tail_merge_possible(&self, prev: &Group, last: &Group) -> bool {
        last.char_len < self.cfg.l_min
            && !last.enumerated
            && prev.char_len + prev.sep_after.chars().count() + last.char_len <= self.cfg.l_max
    }
}
