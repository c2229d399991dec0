//! Late-stage fallback exit for sustained redundancy.
//!
//! After the chain exceeds a minimum step count, `m` consecutive redundant
//! steps trigger an exit provided the highest-confidence trial answer
//! observed so far clears a weak confidence gate. Verified exits always
//! take precedence; the controller consults this state only after the
//! verification path has declined to fire.

use crate::verification::ProbeResult;

/// Loop-breaker settings. `m = None` disables the fallback entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LoopBreakerConfig {
    /// The fallback activates only after strictly more than this many steps.
    pub min_steps: usize,
    /// Consecutive-redundancy threshold; absent disables the loop breaker.
    pub m: Option<usize>,
    /// The best observed probe confidence must strictly exceed this gate.
    pub min_confidence_gate: f64,
}

impl Default for LoopBreakerConfig {
    fn default() -> Self {
        Self {
            min_steps: 50,
            m: None,
            min_confidence_gate: 0.8,
        }
    }
}

/// Per-episode loop-breaker bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoopBreakerState {
    /// Length of the current run of redundant steps.
    pub consecutive_redundant: usize,
    /// Steps observed so far, redundant or not.
    pub steps_seen: usize,
    /// Highest-confidence probe observed so far; ties keep the earlier one.
    pub best_probe: Option<ProbeResult>,
}

impl LoopBreakerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one completed step and report whether the fallback fires.
    pub fn observe_step(&mut self, is_redundant: bool, cfg: &LoopBreakerConfig) -> bool {
        self.steps_seen += 1;
        if is_redundant {
            self.consecutive_redundant += 1;
        } else {
            self.consecutive_redundant = 0;
        }
        let Some(m) = cfg.m else {
            return false;
        };
        self.steps_seen > cfg.min_steps
            && self.consecutive_redundant >= m
            && self
                .best_probe
                .as_ref()
                .is_some_and(|p| p.confidence > cfg.min_confidence_gate)
    }

    /// Track the highest-confidence probe; strict improvement replaces the
    /// incumbent, so ties keep the earlier probe.
    pub fn record_probe(&mut self, probe: &ProbeResult) {
        let better = match &self.best_probe {
            None => true,
            Some(best) => probe.confidence > best.confidence,
        };
        if better {
            self.best_probe = Some(probe.clone());
        }
    }
}
