//! Append-only diagnostic events shared by all agents, serialized as JSON lines.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// Why an episode stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// The in-episode sample count reached the count held at episode start.
    Doubling,
    /// The trial budget was exhausted.
    Budget,
    /// Observed rewards left the confidence region (the policy or model is dropped).
    Inconsistency,
    /// The run horizon was reached.
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    TrialStart {
        trial: u32,
        t: u64,
        budget: u64,
        span_guess: f64,
    },
    EpisodeStart {
        t: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b_value: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model_set_size: Option<usize>,
    },
    EpisodeEnd {
        t: u64,
        length: u64,
        reason: EndReason,
    },
    Elimination {
        t: u64,
        policy: usize,
        trial: u32,
    },
}

pub fn write_jsonl<W: Write>(events: &[Event], mut out: W) -> io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> serde_json::Result<Vec<Event>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
