//! Discrete-event loop.
//!
//! Events run in `(time, insertion sequence)` order. Every protocol
//! message is encoded with the wire codec before it is scheduled and
//! decoded on arrival, so the trace holds exactly what crossed each link.

use std::collections::{BTreeMap, VecDeque};

use super::config::{AdversaryModel, World};
use super::metrics::{MetricsReport, NodeMetrics};
use super::trace::{TraceEvent, TraceRecord};
use crate::aka::{
    bs_accept_forward, core_forward_session_key, decrypt_app_message, encrypt_app_message, AkaError, AppData,
    AuthReject, CoreConfig, CoreNetwork, OpCounts, PlainData, Segment, SessionKeyContext, UeConfig, UeHandshake,
    UeId, UeIdentity, UeState, WireMessage, NONCE_LEN,
};
use crate::crypto::aead::{self, counter_nonce, nonce_counter};
use crate::crypto::kdf::{kdf, kdf_expand, SymmetricKey};
use crate::ids::{KeyId, LinkId, NodeId, SimTime};
use crate::kms::{AuditRecord, Kms, KmsCounts, KmsError, KeyRequest};
use crate::qkd::{distill_key_block, run_bb84_round, Eavesdropper, QkdLinkConfig, RoundStatus};

type Nonce = [u8; NONCE_LEN];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hop {
    /// Generated at the UE.
    Origin,
    AtBs(u32),
    /// Arrived at the core from the given BS.
    AtCore(u32),
    AtDn,
}

#[derive(Debug, Clone)]
struct AppMsg {
    ue: u32,
    idx: u32,
    created: SimTime,
    wire: Vec<u8>,
}

#[derive(Debug, Clone)]
enum Event {
    Attach { ue: u32, bs: u32 },
    Handover { ue: u32, bs: u32 },
    SendAppMsg { hop: Hop, msg: AppMsg },
    QkdRoundDue { link: LinkId },
    KmsRefill { link: LinkId },
    HandshakeStep { ue: u32, txn: Nonce, to: NodeId, wire: Vec<u8> },
}

struct UeActor {
    ue_id: UeId,
    hs: UeHandshake,
    bs: u32,
    txn: Option<Nonce>,
    /// `(bs, txn)` of the last key the network installed for this UE.
    installed: Option<(u32, Nonce)>,
    established_txn: Option<Nonce>,
    registered: bool,
    buffer: VecDeque<(u32, SimTime)>,
}

struct SenderKey {
    key_id: KeyId,
    key: SymmetricKey,
    uses: u32,
}

struct ReceiverKey {
    key: SymmetricKey,
    received: u32,
}

struct LinkActor {
    config: QkdLinkConfig,
    refilling: bool,
    abandoned: bool,
    consecutive_aborts: u32,
    rounds: u64,
    sender: Option<SenderKey>,
    receiver: BTreeMap<KeyId, ReceiverKey>,
    backlog: VecDeque<(u32, u32, SimTime, Vec<u8>)>,
}

struct PendingForward {
    ue: u32,
    bs: u32,
    txn: Nonce,
    ctx: SessionKeyContext,
}

/// Keys of one completed handshake as held by each party.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstablishedSession {
    pub ue: u32,
    pub bs: u32,
    pub ue_key: [u8; 32],
    pub core_key: [u8; 32],
    pub bs_key: [u8; 32],
}

/// Secrets that must never appear on a simulated wire.
#[derive(Debug, Clone, Default)]
pub struct SecretSet {
    pub master_keys: Vec<[u8; 32]>,
    pub session_keys: Vec<[u8; 32]>,
    pub payloads: Vec<Vec<u8>>,
}

/// Everything a run produces. Holds key material for leak audits, so it
/// should not outlive the analysis that needs it.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: MetricsReport,
    pub trace: Vec<TraceRecord>,
    pub audit: Vec<AuditRecord>,
    pub kms_counts: KmsCounts,
    pub sessions: Vec<EstablishedSession>,
    pub secrets: SecretSet,
    pub ue_final_states: BTreeMap<u32, UeState>,
}

impl SimOutput {
    /// Raw bytes of every wire message in trace order.
    pub fn wire_messages(&self) -> Vec<Vec<u8>> {
        self.trace
            .iter()
            .filter_map(|r| match &r.event {
                TraceEvent::Wire { hex, .. } => Some(hex::decode(hex).expect("trace hex")),
                _ => None,
            })
            .collect()
    }

    /// Number of `(secret, message)` pairs where the secret occurs in the
    /// message bytes.
    pub fn secret_occurrences(&self) -> usize {
        let wires = self.wire_messages();
        let s = &self.secrets;
        let needles = s
            .master_keys
            .iter()
            .map(|k| k.as_slice())
            .chain(s.session_keys.iter().map(|k| k.as_slice()))
            .chain(s.payloads.iter().map(|p| p.as_slice()));
        needles.map(|n| wires.iter().filter(|w| contains(w, n)).count()).sum()
    }

    pub fn trace_ndjson(&self) -> String {
        super::trace::trace_to_string(&self.trace)
    }

    pub fn metrics_csv(&self) -> String {
        self.report.to_csv_string()
    }
}

pub fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

fn seed_bytes(world: &World) -> [u8; 8] {
    world.seed.to_be_bytes()
}

/// Deterministic payload for message `idx` of `ue`.
pub fn payload(world: &World, ue: u32, idx: u32) -> Vec<u8> {
    let mut out = vec![0u8; world.traffic.payload_bytes];
    kdf_expand("sim-payload", &[&seed_bytes(world), &ue.to_be_bytes(), &idx.to_be_bytes()], &mut out);
    out
}

pub fn master_key(world: &World, supi: &str) -> [u8; 32] {
    *kdf("sim-master-key", &[&seed_bytes(world), supi.as_bytes()]).as_bytes()
}

fn segment_aad(segment: Segment, ue_id: UeId, key_id: KeyId) -> Vec<u8> {
    let mut a = vec![segment as u8];
    a.extend_from_slice(&ue_id.0);
    a.extend_from_slice(&key_id.0);
    a
}

struct Engine<'w> {
    w: &'w World,
    now: SimTime,
    seq: u64,
    queue: BTreeMap<(SimTime, u64), Event>,
    trace: Vec<TraceRecord>,
    metrics: BTreeMap<NodeId, NodeMetrics>,
    core: CoreNetwork,
    kms: Kms,
    ues: BTreeMap<u32, UeActor>,
    bs_keys: BTreeMap<(u32, u32), (Nonce, SessionKeyContext)>,
    core_sessions: BTreeMap<u32, (Nonce, SessionKeyContext)>,
    links: BTreeMap<LinkId, LinkActor>,
    pending_forwards: Vec<PendingForward>,
    sessions: Vec<EstablishedSession>,
    secrets: SecretSet,
}

/// Runs a world to completion.
pub fn run(world: &World) -> SimOutput {
    let mut e = Engine::new(world);
    e.bootstrap();
    while let Some(((t, _), ev)) = e.queue.pop_first() {
        e.now = t;
        e.dispatch(ev);
    }
    e.finish()
}

impl<'w> Engine<'w> {
    fn new(w: &'w World) -> Self {
        let c = &w.crypto;
        let core_cfg = CoreConfig { params: c.params.parameters(), hybrid: c.hybrid, ots_height: c.ots_height };
        let mut core = CoreNetwork::new(core_cfg, kdf("sim-core", &[&seed_bytes(w)]).as_bytes())
            .expect("validated parameters");
        let mut secrets = SecretSet::default();
        let mut ues = BTreeMap::new();
        for u in &w.topology.ues {
            let k = master_key(w, &u.supi);
            core.add_subscriber(u.supi.as_bytes(), k);
            secrets.master_keys.push(k);
            let ue_cfg = UeConfig {
                params: c.params.parameters(),
                anchor: core.anchor(),
                home_public: c.concealment.then(|| core.home_public().clone()),
                require_hybrid: c.hybrid,
            };
            let identity = UeIdentity::new(u.supi.as_bytes(), k);
            let ue_id = identity.ue_id();
            let seed = kdf("sim-ue", &[&seed_bytes(w), &u.id.to_be_bytes()]);
            ues.insert(
                u.id,
                UeActor {
                    ue_id,
                    hs: UeHandshake::new(identity, ue_cfg, seed.as_bytes()),
                    bs: w.schedule[&u.id][0].1,
                    txn: None,
                    installed: None,
                    established_txn: None,
                    registered: false,
                    buffer: VecDeque::new(),
                },
            );
        }
        let mut kms = Kms::new(w.kms.low_watermark);
        let mut links = BTreeMap::new();
        for link in w.topology.links().into_iter().filter(|l| w.placements.protects(*l)) {
            kms.register_link(link);
            let eve = match w.adversary {
                AdversaryModel::QkdEve { link: l, eavesdropper } if l == link => eavesdropper,
                _ => Eavesdropper::None,
            };
            links.insert(
                link,
                LinkActor {
                    config: w.qkd.link_config(eve),
                    refilling: false,
                    abandoned: false,
                    consecutive_aborts: 0,
                    rounds: 0,
                    sender: None,
                    receiver: BTreeMap::new(),
                    backlog: VecDeque::new(),
                },
            );
        }
        let mut metrics = BTreeMap::new();
        for u in &w.topology.ues {
            metrics.insert(NodeId::Ue(u.id), NodeMetrics::default());
        }
        for b in &w.topology.base_stations {
            metrics.insert(NodeId::Bs(b.id), NodeMetrics::default());
        }
        for n in [NodeId::Core, NodeId::Dn, NodeId::Kms] {
            metrics.insert(n, NodeMetrics::default());
        }
        Engine {
            w,
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            trace: Vec::new(),
            metrics,
            core,
            kms,
            ues,
            bs_keys: BTreeMap::new(),
            core_sessions: BTreeMap::new(),
            links,
            pending_forwards: Vec::new(),
            sessions: Vec::new(),
            secrets,
        }
    }

    fn bootstrap(&mut self) {
        let w = self.w;
        for link in self.links.keys().copied().collect::<Vec<_>>() {
            self.schedule_at(0, Event::KmsRefill { link });
        }
        for (&ue, sched) in &w.schedule {
            for (i, &(t, bs)) in sched.iter().enumerate() {
                let ev = if i == 0 { Event::Attach { ue, bs } } else { Event::Handover { ue, bs } };
                self.schedule_at(t, ev);
            }
        }
        for u in &w.topology.ues {
            for idx in 0..w.traffic.messages_per_ue {
                let t = w.traffic.start_ms + idx as u64 * w.traffic.interval_ms;
                let msg = AppMsg { ue: u.id, idx, created: t, wire: Vec::new() };
                self.schedule_at(t, Event::SendAppMsg { hop: Hop::Origin, msg });
            }
        }
    }

    fn schedule_at(&mut self, t: SimTime, ev: Event) {
        debug_assert!(t >= self.now);
        if t > self.w.horizon_ms {
            return;
        }
        self.queue.insert((t, self.seq), ev);
        self.seq += 1;
    }

    fn log(&mut self, event: TraceEvent) {
        let seq = self.trace.len() as u64;
        self.trace.push(TraceRecord { seq, t: self.now, event });
    }

    fn m(&mut self, node: NodeId) -> &mut NodeMetrics {
        self.metrics.entry(node).or_default()
    }

    fn charge(&mut self, node: NodeId, ops: OpCounts) -> SimTime {
        self.m(node).handshake_ops.add(&ops);
        self.w.latency_us.delay_ms(&ops)
    }

    fn aead_delay(&self, bytes: usize) -> SimTime {
        self.w.latency_us.delay_ms(&OpCounts { aead_bytes: bytes as u64, ..Default::default() })
    }

    fn hop_latency(&self, from: NodeId, to: NodeId) -> SimTime {
        let t = &self.w.topology;
        match (from, to) {
            (NodeId::Ue(_), NodeId::Core) | (NodeId::Core, NodeId::Ue(_)) => t.air_latency_ms + t.backhaul_latency_ms,
            (NodeId::Ue(_), NodeId::Bs(_)) | (NodeId::Bs(_), NodeId::Ue(_)) => t.air_latency_ms,
            (NodeId::Core, NodeId::Dn) | (NodeId::Dn, NodeId::Core) => t.core_dn_latency_ms,
            _ => t.backhaul_latency_ms,
        }
    }

    /// Encodes, applies in-flight tampering, records and returns the bytes.
    fn put_on_wire(&mut self, from: NodeId, to: NodeId, hop: &str, msg: &WireMessage, target_ue: Option<u32>) -> Vec<u8> {
        let mut wire = msg.encode().expect("simulated fields fit the codec");
        let tamper_field = match (self.w.adversary, msg, target_ue) {
            (AdversaryModel::ChallengeTamper { ue }, WireMessage::AuthChallenge(_), Some(t)) if t == ue => {
                Some("ots_signature")
            }
            (AdversaryModel::ResponseTamper { ue }, WireMessage::AuthResponse(_), Some(t)) if t == ue => Some("res"),
            _ => None,
        };
        if let Some(off) = tamper_field.and_then(|f| msg.field_offset(f)) {
            wire[off] ^= 0x01;
        }
        self.log(TraceEvent::Wire {
            from: from.to_string(),
            to: to.to_string(),
            hop: hop.into(),
            step: msg.step_name().into(),
            len: wire.len(),
            hex: hex::encode(&wire),
            tampered: tamper_field.is_some(),
        });
        wire
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Attach { ue, bs } => self.on_attach(ue, bs, false),
            Event::Handover { ue, bs } => self.on_attach(ue, bs, true),
            Event::SendAppMsg { hop, msg } => self.on_app(hop, msg),
            Event::QkdRoundDue { link } => self.on_qkd_round(link),
            Event::KmsRefill { link } => self.on_refill(link),
            Event::HandshakeStep { ue, txn, to, wire } => self.on_handshake_step(ue, txn, to, wire),
        }
    }

    fn on_attach(&mut self, ue: u32, bs: u32, handover: bool) {
        self.log(TraceEvent::Attach { ue, bs, handover });
        self.ues.get_mut(&ue).expect("known UE").bs = bs;
        let p = self.w.placements;
        if !handover {
            self.start_handshake(ue, false);
        } else if p.ue_bs_pqc {
            let reuse = self.w.crypto.keep_keys_across_handover
                && self.ues[&ue].established_txn.is_some()
                && self.ues[&ue].hs.state() == UeState::Established;
            match (reuse, self.core_sessions.get(&ue).cloned()) {
                (true, Some((txn, ctx))) if Some(txn) == self.ues[&ue].established_txn => {
                    if let Some(s) = self.ues.get_mut(&ue).expect("known UE").hs.session_mut() {
                        s.serving_bs = bs;
                    }
                    self.forward(ue, bs, txn, ctx, 0);
                }
                _ => self.start_handshake(ue, true),
            }
        }
        self.flush_if_ready(ue);
    }

    fn start_handshake(&mut self, ue: u32, rekey: bool) {
        let a = self.ues.get_mut(&ue).expect("known UE");
        let old = a.txn.take();
        a.hs.reset();
        let bs = a.bs;
        if let Some(old) = old {
            self.core.forget(&old);
        }
        let a = self.ues.get_mut(&ue).expect("known UE");
        let req = match a.hs.initiate(bs) {
            Ok(r) => r,
            Err(e) => {
                self.fail(ue, NodeId::Ue(ue), &e);
                return;
            }
        };
        a.txn = Some(req.ue_nonce);
        let ops = a.hs.take_ops();
        let m = self.m(NodeId::Ue(ue));
        m.handshakes += 1;
        m.rekeys += rekey as u64;
        self.log(TraceEvent::HandshakeStarted { ue, bs, rekey, ue_nonce: hex::encode(req.ue_nonce) });
        let delay = self.charge(NodeId::Ue(ue), ops);
        let txn = req.ue_nonce;
        self.send_handshake(ue, txn, NodeId::Ue(ue), NodeId::Core, &WireMessage::AuthRequest(req), delay);
    }

    fn send_handshake(&mut self, ue: u32, txn: Nonce, from: NodeId, to: NodeId, msg: &WireMessage, delay: SimTime) {
        let hop = match (from, to) {
            (NodeId::Ue(_), NodeId::Core) | (NodeId::Core, NodeId::Ue(_)) => "ue-bs-core",
            _ => "bs-core",
        };
        let wire = self.put_on_wire(from, to, hop, msg, Some(ue));
        let t = self.now + delay + self.hop_latency(from, to);
        self.schedule_at(t, Event::HandshakeStep { ue, txn, to, wire });
    }

    fn fail(&mut self, ue: u32, node: NodeId, err: &AkaError) {
        self.fail_reason(ue, node, err.to_string());
    }

    fn fail_reason(&mut self, ue: u32, node: NodeId, reason: String) {
        self.m(node).failed += 1;
        let side = match node {
            NodeId::Ue(_) => "ue",
            NodeId::Bs(_) => "bs",
            _ => "core",
        };
        self.log(TraceEvent::HandshakeFailed { ue, side: side.into(), reason });
    }

    fn on_handshake_step(&mut self, ue: u32, txn: Nonce, to: NodeId, wire: Vec<u8>) {
        let msg = match WireMessage::decode(&wire) {
            Ok(m) => m,
            Err(e) => return self.fail_reason(ue, to, format!("undecodable message: {e}")),
        };
        match (to, msg) {
            (NodeId::Core, WireMessage::AuthRequest(req)) => {
                self.m(NodeId::Core).handshakes += 1;
                let res = self.core.handle_auth_request(&req);
                let ops = self.core.take_ops();
                let delay = self.charge(NodeId::Core, ops);
                match res {
                    Ok(ch) => self.send_handshake(ue, txn, NodeId::Core, NodeId::Ue(ue), &WireMessage::AuthChallenge(ch), delay),
                    Err(e) => self.core_reject(ue, txn, &e, delay),
                }
            }
            (NodeId::Core, WireMessage::AuthResponse(resp)) => {
                let res = self.core.verify_response(&resp, self.now);
                let ops = self.core.take_ops();
                let delay = self.charge(NodeId::Core, ops);
                match res {
                    Ok(ctx) => {
                        let ctx = ctx.with_nonce_limit(self.w.crypto.nonce_limit);
                        self.secrets.session_keys.push(*ctx.session_key().as_bytes());
                        self.log(TraceEvent::SessionEstablished {
                            ue,
                            bs: ctx.serving_bs,
                            key_id: ctx.key_id.to_string(),
                            schedule: format!("{:?}", ctx.schedule),
                        });
                        self.core_sessions.insert(ue, (txn, ctx.clone()));
                        let bs = ctx.serving_bs;
                        self.forward(ue, bs, txn, ctx, delay);
                    }
                    Err(e) => self.core_reject(ue, txn, &e, delay),
                }
            }
            (NodeId::Ue(_), msg) => self.ue_receive(ue, txn, msg),
            (NodeId::Bs(bs), WireMessage::KeyForward(fwd)) => self.bs_receive_forward(ue, bs, txn, fwd),
            (_, m) => {
                self.log(TraceEvent::StaleDropped { ue, step: m.step_name().into() });
            }
        }
    }

    fn core_reject(&mut self, ue: u32, txn: Nonce, err: &AkaError, delay: SimTime) {
        self.fail(ue, NodeId::Core, err);
        if let Some(rej) = AuthReject::for_error(txn, err) {
            self.send_handshake(ue, txn, NodeId::Core, NodeId::Ue(ue), &WireMessage::AuthReject(rej), delay);
        }
    }

    fn ue_receive(&mut self, ue: u32, txn: Nonce, msg: WireMessage) {
        if self.ues[&ue].txn != Some(txn) {
            self.log(TraceEvent::StaleDropped { ue, step: msg.step_name().into() });
            return;
        }
        let now = self.now;
        let a = self.ues.get_mut(&ue).expect("known UE");
        match msg {
            WireMessage::AuthChallenge(ch) => {
                let r = a.hs.handle_challenge(&ch, now);
                let ops = a.hs.take_ops();
                let delay = self.charge(NodeId::Ue(ue), ops);
                match r {
                    Ok(resp) => {
                        let limit = self.w.crypto.nonce_limit;
                        let a = self.ues.get_mut(&ue).expect("known UE");
                        if let Some(s) = a.hs.session_mut() {
                            *s = s.clone().with_nonce_limit(limit);
                        }
                        self.send_handshake(ue, txn, NodeId::Ue(ue), NodeId::Core, &WireMessage::AuthResponse(resp), delay)
                    }
                    Err(e) => self.fail(ue, NodeId::Ue(ue), &e),
                }
            }
            WireMessage::AuthReject(rej) => {
                if a.hs.handle_reject(&rej).is_ok() {
                    self.fail(ue, NodeId::Ue(ue), &AkaError::Rejected(rej.reason));
                }
            }
            m => self.log(TraceEvent::StaleDropped { ue, step: m.step_name().into() }),
        }
    }

    /// Core → BS session-key forward; blocked forwards wait for QKD keys.
    fn forward(&mut self, ue: u32, bs: u32, txn: Nonce, ctx: SessionKeyContext, delay: SimTime) {
        let qkd = self.w.placements.bs_core_qkd;
        let now = self.now;
        let res = core_forward_session_key(&ctx, bs, qkd.then_some(&mut self.kms), now);
        match res {
            Ok(fwd) => {
                if fwd.is_protected() {
                    self.m(NodeId::Core).forward_keys += 1;
                    self.charge(NodeId::Core, OpCounts { aead_bytes: 32, ..Default::default() });
                } else {
                    self.m(NodeId::Core).unprotected_forwards += 1;
                }
                let wire = self.put_on_wire(NodeId::Core, NodeId::Bs(bs), "bs-core", &WireMessage::KeyForward(fwd), Some(ue));
                let t = now + delay + self.hop_latency(NodeId::Core, NodeId::Bs(bs));
                self.schedule_at(t, Event::HandshakeStep { ue, txn, to: NodeId::Bs(bs), wire });
                self.after_grant(LinkId::Backhaul(bs));
            }
            Err(AkaError::ForwardBlocked) => {
                self.m(NodeId::Core).blocked_forwards += 1;
                self.log(TraceEvent::ForwardBlocked { ue, bs });
                self.pending_forwards.push(PendingForward { ue, bs, txn, ctx });
                self.trigger_refill(LinkId::Backhaul(bs));
            }
            Err(e) => self.fail(ue, NodeId::Core, &e),
        }
    }

    fn bs_receive_forward(&mut self, ue: u32, bs: u32, txn: Nonce, fwd: crate::aka::KeyForward) {
        let qkd = self.w.placements.bs_core_qkd;
        let protected = fwd.is_protected();
        let res = bs_accept_forward(&fwd, bs, qkd.then_some(&mut self.kms), self.now);
        let ctx = match res {
            Ok(c) => c.with_nonce_limit(self.w.crypto.nonce_limit),
            Err(e) => return self.fail(ue, NodeId::Bs(bs), &e),
        };
        if protected {
            self.m(NodeId::Kms).keys_consumed += 1;
            self.charge(NodeId::Bs(bs), OpCounts { aead_bytes: 32, ..Default::default() });
        }
        self.log(TraceEvent::KeyInstalled { ue, bs, key_id: ctx.key_id.to_string() });
        let bs_key = *ctx.session_key().as_bytes();
        self.bs_keys.insert((bs, ue), (txn, ctx));
        let core_key = self.core_sessions.get(&ue).filter(|(t, _)| *t == txn).map(|(_, c)| *c.session_key().as_bytes());
        let a = self.ues.get_mut(&ue).expect("known UE");
        if a.txn != Some(txn) {
            return;
        }
        let ue_key = a.hs.session().map(|s| *s.session_key().as_bytes());
        match (ue_key, core_key) {
            (Some(u), Some(c)) if u == c && c == bs_key => {
                a.installed = Some((bs, txn));
                a.registered = true;
                if a.established_txn != Some(txn) {
                    a.established_txn = Some(txn);
                    self.m(NodeId::Ue(ue)).established += 1;
                    self.sessions.push(EstablishedSession { ue, bs, ue_key: u, core_key: c, bs_key });
                }
                self.flush_if_ready(ue);
            }
            _ => {
                self.m(NodeId::Core).key_mismatches += 1;
                self.log(TraceEvent::KeyMismatch { ue });
            }
        }
    }

    fn is_ready(&self, ue: u32) -> bool {
        let a = &self.ues[&ue];
        if self.w.placements.ue_bs_pqc {
            a.hs.state() == UeState::Established
                && a.txn.is_some()
                && a.installed == a.txn.map(|t| (a.bs, t))
        } else {
            a.registered
        }
    }

    fn flush_if_ready(&mut self, ue: u32) {
        while self.is_ready(ue) {
            let Some((idx, created)) = self.ues.get_mut(&ue).expect("known UE").buffer.pop_front() else { break };
            self.ue_send(ue, idx, created);
        }
    }

    fn drop_msg(&mut self, ue: u32, idx: u32, reason: &str) {
        self.m(NodeId::Ue(ue)).messages_dropped += 1;
        self.log(TraceEvent::MessageDropped { ue, idx, reason: reason.into() });
    }

    fn on_app(&mut self, hop: Hop, msg: AppMsg) {
        match hop {
            Hop::Origin => {
                if self.is_ready(msg.ue) {
                    self.ue_send(msg.ue, msg.idx, msg.created);
                } else {
                    self.ues.get_mut(&msg.ue).expect("known UE").buffer.push_back((msg.idx, msg.created));
                    self.log(TraceEvent::MessageBuffered { ue: msg.ue, idx: msg.idx, reason: "awaiting session key".into() });
                }
            }
            Hop::AtBs(bs) => self.at_bs(bs, msg),
            Hop::AtCore(bs) => self.at_segment_receiver(LinkId::Backhaul(bs), msg),
            Hop::AtDn => self.at_segment_receiver(LinkId::CoreDn, msg),
        }
    }

    fn ue_send(&mut self, ue: u32, idx: u32, created: SimTime) {
        let data = payload(self.w, ue, idx);
        self.secrets.payloads.push(data.clone());
        let a = self.ues.get_mut(&ue).expect("known UE");
        let (bs, ue_id) = (a.bs, a.ue_id);
        let msg = if self.w.placements.ue_bs_pqc {
            let ctx = a.hs.session_mut().expect("ready implies a session");
            let key_id = ctx.key_id;
            match encrypt_app_message(ctx, &data) {
                Ok(envelope) => WireMessage::AppData(AppData { segment: Segment::UeBs, ue_id, key_id, envelope }),
                Err(e) => return self.drop_msg(ue, idx, &e.to_string()),
            }
        } else {
            WireMessage::PlainData(PlainData { segment: Segment::UeBs, ue_id, payload: data.clone() })
        };
        let mut delay = 0;
        if matches!(msg, WireMessage::AppData(_)) {
            let m = self.m(NodeId::Ue(ue));
            m.bytes_encrypted += data.len() as u64;
            m.traffic_aead_bytes += data.len() as u64;
            delay = self.aead_delay(data.len());
        }
        self.m(NodeId::Ue(ue)).messages_sent += 1;
        self.log(TraceEvent::MessageSent { ue, idx });
        let wire = self.put_on_wire(NodeId::Ue(ue), NodeId::Bs(bs), Segment::UeBs.name(), &msg, None);
        let t = self.now + delay + self.hop_latency(NodeId::Ue(ue), NodeId::Bs(bs));
        self.schedule_at(t, Event::SendAppMsg { hop: Hop::AtBs(bs), msg: AppMsg { ue, idx, created, wire } });
    }

    fn at_bs(&mut self, bs: u32, msg: AppMsg) {
        let data = match WireMessage::decode(&msg.wire) {
            Ok(WireMessage::AppData(d)) => {
                let Some((_, ctx)) = self.bs_keys.get_mut(&(bs, msg.ue)) else {
                    return self.drop_msg(msg.ue, msg.idx, "no session key at BS");
                };
                if ctx.key_id != d.key_id {
                    return self.drop_msg(msg.ue, msg.idx, "stale session key");
                }
                match decrypt_app_message(ctx, &d.envelope) {
                    Ok(p) => {
                        self.m(NodeId::Bs(bs)).traffic_aead_bytes += p.len() as u64;
                        p
                    }
                    Err(e) => return self.drop_msg(msg.ue, msg.idx, &e.to_string()),
                }
            }
            Ok(WireMessage::PlainData(p)) => p.payload,
            _ => return self.drop_msg(msg.ue, msg.idx, "malformed"),
        };
        self.segment_send(LinkId::Backhaul(bs), msg.ue, msg.idx, msg.created, data);
    }

    fn link_nodes(link: LinkId) -> (NodeId, NodeId, Segment, Hop) {
        match link {
            LinkId::Backhaul(bs) => (NodeId::Bs(bs), NodeId::Core, Segment::BsCore, Hop::AtCore(bs)),
            LinkId::CoreDn => (NodeId::Core, NodeId::Dn, Segment::CoreDn, Hop::AtDn),
        }
    }

    fn segment_send(&mut self, link: LinkId, ue: u32, idx: u32, created: SimTime, data: Vec<u8>) {
        if self.w.placements.protects(link)
            && (!self.links[&link].backlog.is_empty() || !self.acquire_segment_key(link))
        {
            self.links.get_mut(&link).expect("protected link").backlog.push_back((ue, idx, created, data));
            self.log(TraceEvent::MessageBuffered { ue, idx, reason: format!("no QKD key on {link}") });
            self.trigger_refill(link);
            return;
        }
        self.segment_transmit(link, ue, idx, created, data);
    }

    /// Sends on a hop whose sender key, if any, is already held.
    fn segment_transmit(&mut self, link: LinkId, ue: u32, idx: u32, created: SimTime, data: Vec<u8>) {
        let (from, to, segment, hop) = Self::link_nodes(link);
        let ue_id = self.ues[&ue].ue_id;
        let msg = if self.w.placements.protects(link) {
            let per_key = self.w.qkd.envelopes_per_key;
            let l = self.links.get_mut(&link).expect("protected link");
            let k = l.sender.as_mut().expect("acquired");
            let key_id = k.key_id;
            let envelope = aead::seal(&k.key, counter_nonce(k.uses as u64), &segment_aad(segment, ue_id, key_id), &data);
            k.uses += 1;
            if k.uses >= per_key {
                l.sender = None;
            }
            let m = self.m(from);
            m.bytes_encrypted += data.len() as u64;
            m.traffic_aead_bytes += data.len() as u64;
            WireMessage::AppData(AppData { segment, ue_id, key_id, envelope })
        } else {
            WireMessage::PlainData(PlainData { segment, ue_id, payload: data.clone() })
        };
        let delay = if matches!(msg, WireMessage::AppData(_)) { self.aead_delay(data.len()) } else { 0 };
        let wire = self.put_on_wire(from, to, segment.name(), &msg, None);
        let t = self.now + delay + self.hop_latency(from, to);
        self.schedule_at(t, Event::SendAppMsg { hop, msg: AppMsg { ue, idx, created, wire } });
    }

    fn acquire_segment_key(&mut self, link: LinkId) -> bool {
        if self.links[&link].sender.is_some() {
            return true;
        }
        let (from, to, _, _) = Self::link_nodes(link);
        let req = KeyRequest { requester: from, peer: to, purpose: "segment".into(), requested_bits: 256 };
        match self.kms.request_key(&req, self.now) {
            Ok(mut g) => {
                let key = SymmetricKey::from_bytes(g.bytes[..32].try_into().expect("256-bit grant"));
                zeroize::Zeroize::zeroize(&mut g.bytes);
                self.m(from).segment_keys += 1;
                self.log(TraceEvent::SegmentKey { link: link.to_string(), key_id: g.key_id.to_string(), requester: from.to_string() });
                self.links.get_mut(&link).expect("protected link").sender = Some(SenderKey { key_id: g.key_id, key, uses: 0 });
                self.after_grant(link);
                true
            }
            Err(KmsError::EmptyPool(_)) => false,
            Err(e) => panic!("KMS rejected a well-formed segment request: {e}"),
        }
    }

    fn at_segment_receiver(&mut self, link: LinkId, msg: AppMsg) {
        let (_, to, segment, _) = Self::link_nodes(link);
        let data = match WireMessage::decode(&msg.wire) {
            Ok(WireMessage::AppData(d)) if d.segment == segment => match self.segment_open(link, &d) {
                Ok(p) => p,
                Err(reason) => return self.drop_msg(msg.ue, msg.idx, &reason),
            },
            Ok(WireMessage::PlainData(p)) if p.segment == segment => p.payload,
            _ => return self.drop_msg(msg.ue, msg.idx, "malformed"),
        };
        match to {
            NodeId::Core => self.segment_send(LinkId::CoreDn, msg.ue, msg.idx, msg.created, data),
            _ => {
                if data != payload(self.w, msg.ue, msg.idx) {
                    return self.drop_msg(msg.ue, msg.idx, "payload corrupted");
                }
                let latency = self.now - msg.created;
                let m = self.m(NodeId::Ue(msg.ue));
                m.messages_delivered += 1;
                m.latencies_ms.push(latency);
                self.log(TraceEvent::MessageDelivered { ue: msg.ue, idx: msg.idx, latency_ms: latency });
            }
        }
    }

    /// Receiver side of a QKD-keyed segment: fetch on first use, strict
    /// in-order nonces, consume after the last permitted envelope.
    fn segment_open(&mut self, link: LinkId, d: &AppData) -> Result<Vec<u8>, String> {
        let (_, to, segment, _) = Self::link_nodes(link);
        let now = self.now;
        if !self.links[&link].receiver.contains_key(&d.key_id) {
            let mut bytes = self.kms.fetch_key(d.key_id, to, now).map_err(|e| e.to_string())?;
            let key = SymmetricKey::from_bytes(bytes[..32].try_into().expect("256-bit key"));
            zeroize::Zeroize::zeroize(&mut bytes);
            self.links.get_mut(&link).expect("protected link").receiver.insert(d.key_id, ReceiverKey { key, received: 0 });
        }
        let per_key = self.w.qkd.envelopes_per_key;
        let l = self.links.get_mut(&link).expect("protected link");
        let r = l.receiver.get_mut(&d.key_id).expect("inserted");
        if nonce_counter(&d.envelope.nonce) != Some(r.received as u64) {
            return Err("out-of-order segment nonce".into());
        }
        let pt = aead::open(&r.key, &d.envelope, &segment_aad(segment, d.ue_id, d.key_id)).map_err(|e| e.to_string())?;
        r.received += 1;
        let done = r.received >= per_key;
        if done {
            l.receiver.remove(&d.key_id);
            self.kms.consume_key(d.key_id, now).map_err(|e| e.to_string())?;
            self.m(NodeId::Kms).keys_consumed += 1;
        }
        self.m(to).traffic_aead_bytes += pt.len() as u64;
        Ok(pt)
    }

    fn after_grant(&mut self, link: LinkId) {
        if self.kms.needs_refill(link) {
            self.trigger_refill(link);
        }
    }

    fn trigger_refill(&mut self, link: LinkId) {
        if self.links.get(&link).is_some_and(|l| !l.refilling && !l.abandoned) {
            self.schedule_at(self.now, Event::KmsRefill { link });
        }
    }

    fn on_refill(&mut self, link: LinkId) {
        let l = self.links.get_mut(&link).expect("protected link");
        if l.refilling || l.abandoned || !self.kms.needs_refill(link) {
            return;
        }
        l.refilling = true;
        let t = self.now + self.w.qkd.round_duration_ms;
        self.schedule_at(t, Event::QkdRoundDue { link });
    }

    fn on_qkd_round(&mut self, link: LinkId) {
        let w = self.w;
        let l = self.links.get_mut(&link).expect("protected link");
        let counter = l.rounds;
        l.rounds += 1;
        let seed = kdf("sim-qkd-round", &[&seed_bytes(w), &link.to_bytes(), &counter.to_be_bytes()]);
        let result = run_bb84_round(&l.config, seed.as_bytes(), self.now).expect("validated QKD config");
        self.m(NodeId::Kms).qkd_rounds += 1;
        self.log(TraceEvent::QkdRound {
            link: link.to_string(),
            status: format!("{:?}", result.status),
            qber: result.qber_estimate,
            pulses: result.pulses,
        });
        let block = match result.status {
            RoundStatus::Distilled => distill_key_block(&result, link, w.qkd.target_block_bits).ok(),
            RoundStatus::Aborted => {
                self.m(NodeId::Kms).qkd_aborts += 1;
                None
            }
        };
        let ingested = block.and_then(|b| self.kms.ingest_key_block(b, self.now).ok());
        let l = self.links.get_mut(&link).expect("protected link");
        match ingested {
            Some(key_id) => {
                l.consecutive_aborts = 0;
                self.m(NodeId::Kms).keys_ingested += 1;
                self.log(TraceEvent::KeyIngested { link: link.to_string(), key_id: key_id.to_string() });
            }
            None => {
                l.consecutive_aborts += 1;
                if l.consecutive_aborts >= w.qkd.max_consecutive_aborts {
                    l.abandoned = true;
                    let n = l.consecutive_aborts;
                    self.log(TraceEvent::QkdLinkAbandoned { link: link.to_string(), consecutive_aborts: n });
                }
            }
        }
        let l = self.links.get_mut(&link).expect("protected link");
        if !l.abandoned && self.kms.pool_depth(link) < w.qkd.pool_target {
            let t = self.now + w.qkd.round_duration_ms;
            self.schedule_at(t, Event::QkdRoundDue { link });
        } else {
            l.refilling = false;
        }
        if ingested.is_some() {
            self.drain_waiting(link);
        }
    }

    /// Retries blocked forwards, then backlogged segment traffic.
    fn drain_waiting(&mut self, link: LinkId) {
        if let LinkId::Backhaul(bs) = link {
            let (retry, keep): (Vec<_>, Vec<_>) =
                std::mem::take(&mut self.pending_forwards).into_iter().partition(|p| p.bs == bs);
            self.pending_forwards = keep;
            for p in retry {
                let current = self.core_sessions.get(&p.ue).is_some_and(|(t, _)| *t == p.txn);
                if current {
                    self.log(TraceEvent::ForwardRetried { ue: p.ue, bs });
                    self.forward(p.ue, p.bs, p.txn, p.ctx, 0);
                }
            }
        }
        loop {
            if self.links[&link].backlog.is_empty() || !self.acquire_segment_key(link) {
                break;
            }
            let (ue, idx, created, data) = self.links.get_mut(&link).expect("protected link").backlog.pop_front().expect("non-empty");
            self.segment_transmit(link, ue, idx, created, data);
        }
    }

    fn finish(mut self) -> SimOutput {
        for ue in self.ues.keys().copied().collect::<Vec<_>>() {
            while let Some((idx, _)) = self.ues.get_mut(&ue).expect("known UE").buffer.pop_front() {
                self.drop_msg(ue, idx, "horizon reached while buffered");
            }
        }
        for link in self.links.keys().copied().collect::<Vec<_>>() {
            while let Some((ue, idx, _, _)) = self.links.get_mut(&link).expect("link").backlog.pop_front() {
                self.drop_msg(ue, idx, "horizon reached in QKD backlog");
            }
        }
        let w = self.w;
        let report = MetricsReport {
            placement: w.placements.label(),
            seed: w.seed,
            handovers: w.handover_count() as u64,
            attaches: w.schedule.len() as u64,
            nodes: self.metrics,
            energy_table: w.energy.clone(),
        };
        SimOutput {
            report,
            trace: self.trace,
            audit: self.kms.audit().to_vec(),
            kms_counts: self.kms.counts(),
            sessions: self.sessions,
            secrets: self.secrets,
            ue_final_states: self.ues.iter().map(|(id, a)| (*id, a.hs.state())).collect(),
        }
    }
}
