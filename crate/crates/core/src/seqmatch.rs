//! Character-level sequence matching with a similarity ratio.
//!
//! Implements the classic longest-matching-block scheme: repeatedly find
//! the longest contiguous match (earliest on ties), recurse on both sides,
//! and report `ratio = 2 * M / (|a| + |b|)` where `M` is the total matched
//! character count. Junk heuristics are intentionally not applied, so the
//! result is deterministic for any input length.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

/// A maximal matching block: `a[a_start..a_start+len] == b[b_start..b_start+len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchBlock {
    pub a_start: usize,
    pub b_start: usize,
    pub len: usize,
}

/// Longest match inside `a[alo..ahi]` vs `b[blo..bhi]`, preferring the
/// earliest start in `a`, then in `b`.
fn longest_match(
    a: &[char],
    b2j: &BTreeMap<char, Vec<usize>>,
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> MatchBlock {
    let mut best = MatchBlock {
        a_start: alo,
        b_start: blo,
        len: 0,
    };
    let mut j2len: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, ch) in a.iter().enumerate().take(ahi).skip(alo) {
        let mut new_j2len: BTreeMap<usize, usize> = BTreeMap::new();
        if let Some(positions) = b2j.get(ch) {
            for &j in positions {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = j2len.get(&j.wrapping_sub(1)).copied().unwrap_or(0) + 1;
                new_j2len.insert(j, k);
                if k > best.len {
                    best = MatchBlock {
                        a_start: i + 1 - k,
                        b_start: j + 1 - k,
                        len: k,
                    };
                }
            }
        }
        j2len = new_j2len;
    }
    best
}

/// All matching blocks between two char sequences, in order.
pub fn matching_blocks(a: &[char], b: &[char]) -> Vec<MatchBlock> {
    let mut b2j: BTreeMap<char, Vec<usize>> = BTreeMap::new();
    for (j, &c) in b.iter().enumerate() {
        b2j.entry(c).or_default().push(j);
    }
    let mut queue: Vec<(usize, usize, usize, usize)> = Vec::new();
    queue.push((0, a.len(), 0, b.len()));
    let mut blocks = Vec::new();
    while let Some((alo, ahi, blo, bhi)) = queue.pop() {
        let m = longest_match(a, &b2j, alo, ahi, blo, bhi);
        if m.len > 0 {
            blocks.push(m);
            if alo < m.a_start && blo < m.b_start {
                queue.push((alo, m.a_start, blo, m.b_start));
            }
            if m.a_start + m.len < ahi && m.b_start + m.len < bhi {
                queue.push((m.a_start + m.len, ahi, m.b_start + m.len, bhi));
            }
        }
    }
    blocks.sort_by_key(|blk| (blk.a_start, blk.b_start));
    blocks
}

/// Similarity ratio in `[0, 1]`; 1.0 when both inputs are empty.
pub fn ratio(a: &str, b: &str) -> f64 {
    let a_chars: Vec<char> = a.chars().collect();
    let b_chars: Vec<char> = b.chars().collect();
    let total = a_chars.len() + b_chars.len();
    if total == 0 {
        return 1.0;
    }
    let matched: usize = matching_blocks(&a_chars, &b_chars)
        .iter()
        .map(|m| m.len)
        .sum();
    2.0 * matched as f64 / total as f64
}
