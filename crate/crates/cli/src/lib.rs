//! Operator surface for the early-exit control plane: configuration
//! loading, JSONL trace/episode files, HTTP generation and embedding
//! providers, analysis reports, and the command implementations behind
//! the `puma` binary.

pub mod commands;
pub mod config;
pub mod http;
pub mod jsonl;
pub mod report;
