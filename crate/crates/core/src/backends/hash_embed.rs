//! Deterministic feature-hashing embedder.
//!
//! Character 3-grams are hashed into `dim` signed buckets and the result
//! is L2-normalized. Identical text maps to identical vectors and
//! near-duplicate text to high cosine similarity, which is what the
//! redundancy gate needs from a test-grade detector.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{BackendError, EmbeddingBackend};
use crate::redundancy::Embedding;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Character n-gram feature hashing into a fixed-dimension unit vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    /// Dimensions below 8 collide too aggressively to be useful.
    pub fn new(dim: usize) -> Result<Self, BackendError> {
        if dim < 8 {
            return Err(BackendError::Config(alloc::format!(
                "embedding dim must be >= 8, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    fn accumulate(&self, gram: &str, values: &mut [f64]) {
        let h = fnv1a(gram.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        let mut values = vec![0.0f64; self.dim];
        let chars: Vec<char> = text.chars().collect();
        if chars.len() < 3 {
            self.accumulate(text, &mut values);
        } else {
            let mut gram = String::with_capacity(12);
            for w in chars.windows(3) {
                gram.clear();
                gram.extend(w);
                self.accumulate(&gram, &mut values);
            }
        }
        match Embedding::new(values) {
            Ok(e) => Ok(e),
            Err(_) => {
                // Signed buckets cancelled out exactly; fall back to a
                // deterministic unit basis vector.
                let mut values = vec![0.0f64; self.dim];
                values[(fnv1a(text.as_bytes()) % self.dim as u64) as usize] = 1.0;
                Ok(Embedding::new(values).expect("basis vector is non-zero"))
            }
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }
}
