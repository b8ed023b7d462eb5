//! Newline-delimited JSON event trace.

use std::io::{self, Write};

use serde::Serialize;

use crate::ids::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub t: SimTime,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Attach { ue: u32, bs: u32, handover: bool },
    /// A message on a simulated wire, as encoded bytes.
    Wire { from: String, to: String, hop: String, step: String, len: usize, hex: String, tampered: bool },
    HandshakeStarted { ue: u32, bs: u32, rekey: bool, ue_nonce: String },
    HandshakeFailed { ue: u32, side: String, reason: String },
    SessionEstablished { ue: u32, bs: u32, key_id: String, schedule: String },
    KeyInstalled { ue: u32, bs: u32, key_id: String },
    KeyMismatch { ue: u32 },
    ForwardBlocked { ue: u32, bs: u32 },
    ForwardRetried { ue: u32, bs: u32 },
    StaleDropped { ue: u32, step: String },
    QkdRound { link: String, status: String, qber: f64, pulses: usize },
    QkdLinkAbandoned { link: String, consecutive_aborts: u32 },
    KeyIngested { link: String, key_id: String },
    SegmentKey { link: String, key_id: String, requester: String },
    MessageSent { ue: u32, idx: u32 },
    MessageBuffered { ue: u32, idx: u32, reason: String },
    MessageDelivered { ue: u32, idx: u32, latency_ms: u64 },
    MessageDropped { ue: u32, idx: u32, reason: String },
}

pub fn write_trace<W: Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn trace_to_string(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(records, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("json is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_json_object_per_line() {
        let recs = vec![
            TraceRecord { seq: 0, t: 5, event: TraceEvent::Attach { ue: 1, bs: 2, handover: false } },
            TraceRecord { seq: 1, t: 6, event: TraceEvent::KeyMismatch { ue: 1 } },
        ];
        let s = trace_to_string(&recs);
        assert_eq!(
            s,
            "{\"seq\":0,\"t\":5,\"event\":\"attach\",\"ue\":1,\"bs\":2,\"handover\":false}\n\
             {\"seq\":1,\"t\":6,\"event\":\"key_mismatch\",\"ue\":1}\n"
        );
    }
}
