//! Step-level redundancy scoring and windowed reasoning semantic entropy.
//!
//! A step's redundancy score is the maximum cosine similarity between its
//! embedding and the embeddings of the previous `k` steps; a step whose
//! score strictly exceeds `tau_sim` is a candidate exit. Reasoning semantic
//! entropy is a diagnostic: the entropy of greedy single-link cluster
//! proportions over a recent step window.

use alloc::vec::Vec;

use crate::mathx;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RedundancyError {
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding must be finite and non-zero")]
    DegenerateVector,
    #[error("entropy window must be non-empty")]
    EmptyWindow,
    #[error("cluster threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// A unit-normalized embedding vector.
///
/// Vectors are normalized once at construction so cosine similarity
/// reduces to a dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Build an embedding, normalizing to unit L2 norm.
    pub fn new(mut values: Vec<f64>) -> Result<Self, RedundancyError> {
        let norm_sq: f64 = values.iter().map(|v| v * v).sum();
        if !norm_sq.is_finite() || norm_sq <= 0.0 {
            return Err(RedundancyError::DegenerateVector);
        }
        let inv = 1.0 / mathx::sqrt(norm_sq);
        for v in &mut values {
            *v *= inv;
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Lookback window size and similarity threshold for candidate gating.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RedundancyConfig {
    /// How many preceding steps the current step is compared against.
    pub k: usize,
    /// Flag threshold: a step is a candidate exit when score > tau_sim.
    pub tau_sim: f64,
}

impl Default for RedundancyConfig {
    fn default() -> Self {
        Self {
            k: 1,
            tau_sim: 0.35,
        }
    }
}

/// Outcome of scoring one step against its lookback window.
#[derive(Debug, Clone, PartialEq)]
pub struct RedundancyVerdict {
    /// Max cosine over the window; 0.0 when there is no history.
    pub score: f64,
    /// Strictly `score > tau_sim`; always false with empty history.
    pub is_redundant: bool,
    /// One-based indices of the steps compared against, oldest first.
    pub compared_against: Vec<usize>,
}

/// Cosine similarity. For unit vectors this is the dot product.
pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64, RedundancyError> {
    if u.dim() != v.dim() {
        return Err(RedundancyError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum())
}

/// Score the current step against the last `min(k, |history|)` steps.
///
/// `history` holds the embeddings of steps `1..t-1` in order. With empty
/// history the score is 0 and the step is never a candidate.
pub fn redundancy_score(
    current: &Embedding,
    history: &[Embedding],
    cfg: &RedundancyConfig,
) -> Result<RedundancyVerdict, RedundancyError> {
    if history.is_empty() {
        return Ok(RedundancyVerdict {
            score: 0.0,
            is_redundant: false,
            compared_against: Vec::new(),
        });
    }
    let window = cfg.k.min(history.len());
    let first = history.len() - window;
    let mut score = f64::NEG_INFINITY;
    let mut compared = Vec::with_capacity(window);
    for (offset, past) in history[first..].iter().enumerate() {
        compared.push(first + offset + 1);
        let sim = cosine(past, current)?;
        if sim > score {
            score = sim;
        }
    }
    Ok(RedundancyVerdict {
        score,
        is_redundant: score > cfg.tau_sim,
        compared_against: compared,
    })
}

/// Reasoning semantic entropy of a step window.
///
/// Steps are clustered greedily: each joins the first existing cluster
/// whose representative (first member) has cosine >= `cluster_threshold`,
/// otherwise it opens a new cluster. Returns the natural-log entropy of
/// the cluster proportions, in `[0, ln w]`.
pub fn reasoning_semantic_entropy(
    window: &[Embedding],
    cluster_threshold: f64,
) -> Result<f64, RedundancyError> {
    if window.is_empty() {
        return Err(RedundancyError::EmptyWindow);
    }
    if !(cluster_threshold > 0.0 && cluster_threshold <= 1.0) {
        return Err(RedundancyError::InvalidThreshold(cluster_threshold));
    }
    let mut reps: Vec<&Embedding> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for emb in window {
        let mut joined = false;
        for (rep, size) in reps.iter().zip(sizes.iter_mut()) {
            if cosine(rep, emb)? >= cluster_threshold {
                *size += 1;
                joined = true;
                break;
            }
        }
        if !joined {
            reps.push(emb);
            sizes.push(1);
        }
    }
    if sizes.len() == 1 {
        return Ok(0.0);
    }
    // H = ln w - (sum_c n_c ln n_c) / w; the identity keeps the
    // all-singleton case bit-exactly equal to ln w.
    let w = window.len() as f64;
    let weighted: f64 = sizes
        .iter()
        .map(|&n| {
            let n = n as f64;
            n * mathx::ln(n)
        })
        .sum();
    Ok((mathx::ln(w) - weighted / w).max(0.0))
}
