//! Writes a small deterministic trace fixture file for trying out the
//! replay, analyze, sweep, and export commands without a live endpoint.
//!
//! Usage: cargo run -p puma-cli --example make_demo_traces -- [PATH]

use std::io::Write;

use puma_core::synthetic::{demo_trace, synthetic_trace, TraceShape};

fn main() -> std::io::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "fixtures/demo_traces.jsonl".to_string());
    if let Some(parent) = std::path::Path::new(&path).parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);

    // Three flavors: an early verified exit, a chain that only the
    // loop breaker would cut, and a fully novel chain.
    for i in 0..3u64 {
        let trace = demo_trace(&format!("verified-{i}"));
        writeln!(out, "{}", serde_json::to_string(&trace).unwrap())?;
    }
    for i in 0..2u64 {
        // The redundant tail keeps probing at 0.92 confidence: never enough
        // for a verified exit, plenty for the loop-breaker gate.
        let steps = 56;
        let trials = (0..steps)
            .map(|s| (s >= 4).then(|| ("7".to_string(), 0.92)))
            .collect();
        let trace = synthetic_trace(
            0x00de_0010 + i,
            &TraceShape {
                id: format!("loopy-{i}"),
                steps,
                redundant_tail: steps - 4,
                trials,
                final_answer: "7".to_string(),
                gold_answer: Some("7".to_string()),
                tokens_per_step: 18,
            },
        );
        writeln!(out, "{}", serde_json::to_string(&trace).unwrap())?;
    }
    for i in 0..2u64 {
        let steps = 9;
        let trials = (0..steps)
            .map(|s| {
                Some((
                    if s >= 5 {
                        "13".to_string()
                    } else {
                        format!("{s}")
                    },
                    0.5 + 0.05 * s as f64,
                ))
            })
            .collect();
        let trace = synthetic_trace(
            0x00de_0020 + i,
            &TraceShape {
                id: format!("novel-{i}"),
                steps,
                redundant_tail: 0,
                trials,
                final_answer: "13".to_string(),
                gold_answer: Some("13".to_string()),
                tokens_per_step: 25,
            },
        );
        writeln!(out, "{}", serde_json::to_string(&trace).unwrap())?;
    }
    out.flush()?;
    println!("wrote 7 traces to {path}");
    Ok(())
}
