//! Core algorithms for redundancy-gated early exit over streaming
//! chain-of-thought generation.
//!
//! The crate is organized around the stages of the online control loop:
//!
//! - [`segmenter`] turns raw reasoning text into coherent steps, offline or
//!   incrementally from a token stream;
//! - [`redundancy`] scores each new step's semantic redundancy against recent
//!   steps and computes windowed reasoning semantic entropy;
//! - [`verification`] induces trial answers at candidate exit points, scores
//!   their confidence, and evaluates the exit predicate;
//! - [`loop_breaker`] is the late-stage fallback exit for sustained
//!   redundancy;
//! - [`controller`] is the per-episode orchestration state machine tying the
//!   above together with token accounting;
//! - [`backends`] defines the generation/embedding provider contracts plus
//!   deterministic replay, hashing-embedder, and scripted implementations;
//! - [`analyzer`] reproduces the offline diagnostics (golden-step
//!   overthinking, answer-signal failure rates, counterfactuals, threshold
//!   sweeps, step savings) and exports stopping-supervision training rows.
//!
//! The crate is `no_std`-compatible (allocation required). Disable the
//! default `std` feature and enable `libm` to build without the standard
//! library.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("building without `std` requires the `libm` feature for float math");

pub mod analyzer;
pub mod backends;
pub mod controller;
pub mod loop_breaker;
mod mathx;
pub mod redundancy;
pub mod segmenter;
pub mod seqmatch;
pub mod synthetic;
pub mod verification;

pub use controller::{Controller, ControllerAction, EpisodeResult, ExitKind, PumaConfig};
pub use redundancy::{Embedding, RedundancyConfig, RedundancyVerdict};
pub use segmenter::{ReasoningStep, SegmenterConfig, StepRole};
pub use verification::{ProbeResult, TaskKind, VerificationConfig};
