//! Per-node counters, energy totals and CSV export.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::energy::EnergyCostTable;
use crate::aka::OpCounts;
use crate::ids::NodeId;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeMetrics {
    /// Handshakes started (UE) or answered (core).
    pub handshakes: u64,
    /// Handshakes triggered by a handover.
    pub rekeys: u64,
    pub failed: u64,
    pub established: u64,
    pub qkd_rounds: u64,
    pub qkd_aborts: u64,
    pub keys_ingested: u64,
    pub keys_consumed: u64,
    /// QKD keys granted for segment encryption.
    pub segment_keys: u64,
    /// QKD keys granted for session-key forwarding.
    pub forward_keys: u64,
    pub bytes_encrypted: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    pub blocked_forwards: u64,
    pub unprotected_forwards: u64,
    /// Established sessions whose UE, core and BS keys differ.
    pub key_mismatches: u64,
    pub handshake_ops: OpCounts,
    /// Plaintext bytes sealed plus opened for application traffic.
    pub traffic_aead_bytes: u64,
    pub latencies_ms: Vec<u64>,
}

impl NodeMetrics {
    pub fn add(&mut self, o: &NodeMetrics) {
        self.handshakes += o.handshakes;
        self.rekeys += o.rekeys;
        self.failed += o.failed;
        self.established += o.established;
        self.qkd_rounds += o.qkd_rounds;
        self.qkd_aborts += o.qkd_aborts;
        self.keys_ingested += o.keys_ingested;
        self.keys_consumed += o.keys_consumed;
        self.segment_keys += o.segment_keys;
        self.forward_keys += o.forward_keys;
        self.bytes_encrypted += o.bytes_encrypted;
        self.messages_sent += o.messages_sent;
        self.messages_delivered += o.messages_delivered;
        self.messages_dropped += o.messages_dropped;
        self.blocked_forwards += o.blocked_forwards;
        self.unprotected_forwards += o.unprotected_forwards;
        self.key_mismatches += o.key_mismatches;
        self.handshake_ops.add(&o.handshake_ops);
        self.traffic_aead_bytes += o.traffic_aead_bytes;
        self.latencies_ms.extend_from_slice(&o.latencies_ms);
    }

    pub fn energy_handshake(&self, t: &EnergyCostTable) -> f64 {
        t.ops(&self.handshake_ops)
    }

    pub fn energy_traffic(&self, t: &EnergyCostTable) -> f64 {
        t.aead(self.traffic_aead_bytes)
    }

    pub fn energy_qkd(&self, t: &EnergyCostTable) -> f64 {
        t.qkd(self.qkd_rounds)
    }

    pub fn total_energy(&self, t: &EnergyCostTable) -> f64 {
        self.energy_handshake(t) + self.energy_traffic(t) + self.energy_qkd(t)
    }

    pub fn latency(&self) -> LatencyStats {
        LatencyStats::from_samples(&self.latencies_ms)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencyStats {
    pub count: u64,
    pub min_ms: u64,
    pub mean_ms: f64,
    pub p95_ms: u64,
    pub max_ms: u64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        let mut s = samples.to_vec();
        s.sort_unstable();
        let n = s.len();
        let rank = (0.95 * n as f64).ceil() as usize;
        LatencyStats {
            count: n as u64,
            min_ms: s[0],
            mean_ms: s.iter().sum::<u64>() as f64 / n as f64,
            p95_ms: s[rank.clamp(1, n) - 1],
            max_ms: s[n - 1],
        }
    }
}

/// Outcome of one run: per-node counters plus the cost table used to
/// price them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub placement: String,
    pub seed: u64,
    pub handovers: u64,
    pub attaches: u64,
    pub nodes: BTreeMap<NodeId, NodeMetrics>,
    pub energy_table: EnergyCostTable,
}

#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    node: &'a str,
    handshakes: u64,
    rekeys: u64,
    failed: u64,
    established: u64,
    qkd_rounds: u64,
    qkd_aborts: u64,
    keys_ingested: u64,
    keys_consumed: u64,
    segment_keys: u64,
    forward_keys: u64,
    bytes_encrypted: u64,
    messages_sent: u64,
    messages_delivered: u64,
    messages_dropped: u64,
    blocked_forwards: u64,
    unprotected_forwards: u64,
    key_mismatches: u64,
    kem_keygen: u64,
    kem_encap: u64,
    kem_decap: u64,
    ots_sign: u64,
    ots_verify: u64,
    kdf: u64,
    classical_dh: u64,
    handshake_aead_bytes: u64,
    traffic_aead_bytes: u64,
    energy_handshake_j: f64,
    energy_traffic_j: f64,
    energy_qkd_j: f64,
    total_energy_j: f64,
    latency_count: u64,
    latency_min_ms: u64,
    latency_mean_ms: f64,
    latency_p95_ms: u64,
    latency_max_ms: u64,
}

fn row<'a>(node: &'a str, m: &NodeMetrics, t: &EnergyCostTable) -> MetricsRow<'a> {
    let l = m.latency();
    let o = &m.handshake_ops;
    MetricsRow {
        node,
        handshakes: m.handshakes,
        rekeys: m.rekeys,
        failed: m.failed,
        established: m.established,
        qkd_rounds: m.qkd_rounds,
        qkd_aborts: m.qkd_aborts,
        keys_ingested: m.keys_ingested,
        keys_consumed: m.keys_consumed,
        segment_keys: m.segment_keys,
        forward_keys: m.forward_keys,
        bytes_encrypted: m.bytes_encrypted,
        messages_sent: m.messages_sent,
        messages_delivered: m.messages_delivered,
        messages_dropped: m.messages_dropped,
        blocked_forwards: m.blocked_forwards,
        unprotected_forwards: m.unprotected_forwards,
        key_mismatches: m.key_mismatches,
        kem_keygen: o.kem_keygen,
        kem_encap: o.kem_encap,
        kem_decap: o.kem_decap,
        ots_sign: o.ots_sign,
        ots_verify: o.ots_verify,
        kdf: o.kdf,
        classical_dh: o.classical_dh,
        handshake_aead_bytes: o.aead_bytes,
        traffic_aead_bytes: m.traffic_aead_bytes,
        energy_handshake_j: m.energy_handshake(t),
        energy_traffic_j: m.energy_traffic(t),
        energy_qkd_j: m.energy_qkd(t),
        total_energy_j: m.total_energy(t),
        latency_count: l.count,
        latency_min_ms: l.min_ms,
        latency_mean_ms: l.mean_ms,
        latency_p95_ms: l.p95_ms,
        latency_max_ms: l.max_ms,
    }
}

impl MetricsReport {
    pub fn node(&self, id: NodeId) -> NodeMetrics {
        self.nodes.get(&id).cloned().unwrap_or_default()
    }

    pub fn total(&self) -> NodeMetrics {
        let mut t = NodeMetrics::default();
        for m in self.nodes.values() {
            t.add(m);
        }
        t
    }

    /// Sum over UE rows.
    pub fn ue_total(&self) -> NodeMetrics {
        let mut t = NodeMetrics::default();
        for (_, m) in self.nodes.iter().filter(|(id, _)| matches!(id, NodeId::Ue(_))) {
            t.add(m);
        }
        t
    }

    /// Key establishments that protect a segment: UE handshakes when the
    /// air interface is PQC-protected, plus QKD keys granted to segments.
    pub fn segment_key_establishments(&self, ue_bs_pqc: bool) -> u64 {
        let t = self.total();
        t.segment_keys + if ue_bs_pqc { self.ue_total().handshakes } else { 0 }
    }

    /// One row per node, then `TOTAL`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (id, m) in &self.nodes {
            w.serialize(row(&id.to_string(), m, &self.energy_table))?;
        }
        w.serialize(row("TOTAL", &self.total(), &self.energy_table))?;
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// One row of a placement comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub placement: String,
    pub handovers: u64,
    pub ue_handshakes: u64,
    pub rekeys: u64,
    pub rekeys_per_handover: f64,
    pub failed: u64,
    pub established: u64,
    pub qkd_rounds: u64,
    pub qkd_aborts: u64,
    pub keys_consumed: u64,
    pub segment_keys: u64,
    pub forward_keys: u64,
    pub segment_key_establishments: u64,
    pub blocked_forwards: u64,
    pub unprotected_forwards: u64,
    pub messages_delivered: u64,
    pub energy_handshake_j: f64,
    pub energy_traffic_j: f64,
    pub energy_qkd_j: f64,
    pub total_energy_j: f64,
    pub latency_mean_ms: f64,
}

impl ComparisonRow {
    pub fn from_report(r: &MetricsReport, ue_bs_pqc: bool) -> Self {
        let t = r.total();
        let ue = r.ue_total();
        let e = &r.energy_table;
        ComparisonRow {
            placement: r.placement.clone(),
            handovers: r.handovers,
            ue_handshakes: ue.handshakes,
            rekeys: ue.rekeys,
            rekeys_per_handover: if r.handovers == 0 { 0.0 } else { ue.rekeys as f64 / r.handovers as f64 },
            failed: ue.failed,
            established: t.established,
            qkd_rounds: t.qkd_rounds,
            qkd_aborts: t.qkd_aborts,
            keys_consumed: t.keys_consumed,
            segment_keys: t.segment_keys,
            forward_keys: t.forward_keys,
            segment_key_establishments: r.segment_key_establishments(ue_bs_pqc),
            blocked_forwards: t.blocked_forwards,
            unprotected_forwards: t.unprotected_forwards,
            messages_delivered: t.messages_delivered,
            energy_handshake_j: t.energy_handshake(e),
            energy_traffic_j: t.energy_traffic(e),
            energy_qkd_j: t.energy_qkd(e),
            total_energy_j: t.total_energy(e),
            latency_mean_ms: t.latency().mean_ms,
        }
    }
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
