//! JSON-lines event log for puts and reads.

use std::io::{self, Write};

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommOp {
    Put,
    Read,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommEvent {
    /// Virtual timestamp.
    pub t: u64,
    pub window: &'static str,
    pub op: CommOp,
    pub channel: usize,
    pub seq: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fresh: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visible_at: Option<u64>,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, events: &[T]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
