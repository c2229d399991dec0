//! `puma` — early-exit control plane for long chain-of-thought generation.
//!
//! Subcommands: `run` one live or offline episode, `replay` a recorded
//! trace file, `analyze` overthinking and answer-signal diagnostics,
//! `sweep` stopping thresholds, and `export` stopping-supervision
//! training rows. Endpoint URLs and credentials come from environment
//! variables only (PUMA_GEN_* and PUMA_EMBED_*).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use puma_cli::commands;
use puma_cli::config::{load_config, parse_override, ResolvedConfig};

#[derive(Parser)]
#[command(
    name = "puma",
    version,
    about = "Early-exit control plane for long chain-of-thought generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Config file (flat `key = value` lines).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set tau_sim=0.50
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Task kind: math, mc, or code (shorthand for --set task=...).
    #[arg(long, value_name = "TASK")]
    task: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ResolvedConfig> {
        let mut overrides = Vec::new();
        if let Some(task) = &self.task {
            overrides.push(("task".to_string(), task.clone()));
        }
        for raw in &self.set {
            overrides.push(parse_override(raw)?);
        }
        Ok(load_config(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one controlled generation episode.
    Run {
        /// The question to reason about.
        #[arg(long)]
        question: String,
        /// Identifier recorded in the episode output.
        #[arg(long, default_value = "q0")]
        id: String,
        /// Generation backend: http, replay, or stub.
        #[arg(long, default_value = "stub")]
        backend: String,
        /// Trace file (required for --backend replay).
        #[arg(long, value_name = "PATH")]
        traces: Option<PathBuf>,
        /// Episode output path (JSONL).
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Replay a recorded trace file; one episode per trace.
    Replay {
        #[arg(long, value_name = "PATH")]
        traces: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Offline diagnostics over recorded traces.
    Analyze {
        /// Analysis kind: overthink, signals, counterfactual, or steps.
        #[arg(long)]
        kind: String,
        #[arg(long, value_name = "PATH")]
        traces: PathBuf,
        /// Episode file (required for --kind steps).
        #[arg(long, value_name = "PATH")]
        episodes: Option<PathBuf>,
        /// Report output path; a CSV sidecar is written next to it.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Confidence trigger threshold for the signal analyses.
        #[arg(long, default_value_t = 0.95)]
        lambda: f64,
        /// Consecutive identical answers for the consistency signal.
        #[arg(long, default_value_t = 3)]
        consecutive: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Sweep a stopping signal's threshold over a grid.
    Sweep {
        /// Signal family: confidence or consistency.
        #[arg(long)]
        signal: String,
        /// Comma-separated grid values; defaults to the standard grid.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_name = "PATH")]
        traces: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Export stopping-supervision training rows.
    Export {
        /// Row kind: sft, dpo, or grpo.
        #[arg(long)]
        kind: String,
        #[arg(long, value_name = "PATH")]
        traces: PathBuf,
        #[arg(long, value_name = "PATH")]
        episodes: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Compression filter for SFT rows: keep stop/full below this ratio.
        #[arg(long, default_value_t = 0.6)]
        ratio_cap: f64,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn dispatch(cli: Cli) -> anyhow::Result<usize> {
    match cli.command {
        Command::Run {
            question,
            id,
            backend,
            traces,
            out,
            config,
        } => {
            let resolved = config.resolve()?;
            commands::cmd_run(&question, &id, &backend, traces.as_deref(), &out, &resolved)
        }
        Command::Replay {
            traces,
            out,
            config,
        } => {
            let resolved = config.resolve()?;
            commands::cmd_replay(&traces, &out, &resolved)
        }
        Command::Analyze {
            kind,
            traces,
            episodes,
            out,
            lambda,
            consecutive,
            config,
        } => {
            let resolved = config.resolve()?;
            commands::cmd_analyze(
                &kind,
                &traces,
                episodes.as_deref(),
                &out,
                lambda,
                consecutive,
                &resolved,
            )
        }
        Command::Sweep {
            signal,
            grid,
            traces,
            out,
            config,
        } => {
            let resolved = config.resolve()?;
            commands::cmd_sweep(&signal, grid.as_deref(), &traces, &out, &resolved)
        }
        Command::Export {
            kind,
            traces,
            episodes,
            out,
            ratio_cap,
            config,
        } => {
            let resolved = config.resolve()?;
            commands::cmd_export(&kind, &traces, &episodes, &out, ratio_cap, &resolved)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} item(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
