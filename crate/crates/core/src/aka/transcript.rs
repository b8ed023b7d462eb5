//! One scripted handshake with every wire message captured.
//!
//! The run uses a single subscriber, serving BS 1 and a KMS holding one
//! QKD-distilled key for the BS 1 backhaul, so the key forward is sealed.

use std::fmt::Write as _;

use super::{
    bs_accept_forward, core_forward_session_key, AkaError, AuthReject, CoreConfig, CoreNetwork, KeySchedule,
    UeConfig, UeHandshake, UeIdentity, WireMessage,
};
use crate::crypto::kdf::kdf;
use crate::crypto::kem::LweParameters;
use crate::ids::{KeyId, LinkId};
use crate::kms::Kms;
use crate::qkd::{distill_key_block, run_bb84_round, QkdLinkConfig};

pub const TRANSCRIPT_SUPI: &[u8] = b"imsi-001010000000001";
pub const TRANSCRIPT_BS: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tamper {
    /// Flip one bit of the challenge's one-time signature in flight.
    Signature,
    /// Flip one bit of RES in flight.
    Response,
}

#[derive(Debug, Clone)]
pub struct TranscriptOptions {
    pub seed: u64,
    pub params: LweParameters,
    pub hybrid: bool,
    pub concealment: bool,
    pub ots_height: u32,
    pub tamper: Option<Tamper>,
}

impl Default for TranscriptOptions {
    fn default() -> Self {
        TranscriptOptions {
            seed: 0,
            params: LweParameters::shipped(),
            hybrid: false,
            concealment: true,
            ots_height: 4,
            tamper: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TranscriptStep {
    pub from: &'static str,
    pub to: &'static str,
    /// Decoded from `wire` as the receiver saw it.
    pub message: WireMessage,
    pub wire: Vec<u8>,
    pub tampered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Established { schedule: KeySchedule, session_key_id: KeyId },
    Failed { side: &'static str, error: AkaError },
}

#[derive(Debug, Clone)]
pub struct Transcript {
    pub steps: Vec<TranscriptStep>,
    pub outcome: Outcome,
}

struct Recorder {
    steps: Vec<TranscriptStep>,
    tamper: Option<(&'static str, &'static str)>,
}

impl Recorder {
    fn send(&mut self, from: &'static str, to: &'static str, msg: WireMessage) -> WireMessage {
        let mut wire = msg.encode().expect("handshake fields fit the codec");
        let mut tampered = false;
        if let Some((step, field)) = self.tamper {
            if msg.step_name() == step {
                let off = msg.field_offset(field).expect("field present");
                wire[off] ^= 0x01;
                tampered = true;
            }
        }
        let message = WireMessage::decode(&wire).expect("bit flips keep the framing intact");
        self.steps.push(TranscriptStep { from, to, message: message.clone(), wire, tampered });
        message
    }
}

pub fn run_transcript(opts: &TranscriptOptions) -> Transcript {
    let seed = opts.seed.to_be_bytes();
    let tamper = opts.tamper.map(|t| match t {
        Tamper::Signature => ("Authentication Challenge", "ots_signature"),
        Tamper::Response => ("Authentication Response", "res"),
    });
    let mut rec = Recorder { steps: Vec::new(), tamper };
    let core_cfg = CoreConfig { params: opts.params.clone(), hybrid: opts.hybrid, ots_height: opts.ots_height };
    let mut core = CoreNetwork::new(core_cfg, kdf("transcript-core", &[&seed]).as_bytes()).expect("valid parameters");
    let k = *kdf("transcript-master-key", &[&seed]).as_bytes();
    core.add_subscriber(TRANSCRIPT_SUPI, k);
    let ue_cfg = UeConfig {
        params: opts.params.clone(),
        anchor: core.anchor(),
        home_public: opts.concealment.then(|| core.home_public().clone()),
        require_hybrid: opts.hybrid,
    };
    let mut ue = UeHandshake::new(UeIdentity::new(TRANSCRIPT_SUPI, k), ue_cfg, kdf("transcript-ue", &[&seed]).as_bytes());

    let link = LinkId::Backhaul(TRANSCRIPT_BS);
    let mut kms = Kms::new(1);
    kms.register_link(link);
    let qkd = QkdLinkConfig { pulses_per_round: 2000, ..Default::default() };
    let round = run_bb84_round(&qkd, kdf("transcript-qkd", &[&seed]).as_bytes(), 0).expect("valid QKD config");
    let block = distill_key_block(&round, link, 256).expect("noiseless round distills");
    kms.ingest_key_block(block, 0).expect("fresh pool");

    let failed = |side, error| Transcript { steps: Vec::new(), outcome: Outcome::Failed { side, error } };
    let with_steps = |mut t: Transcript, rec: Recorder| {
        t.steps = rec.steps;
        t
    };

    let req = match ue.initiate(TRANSCRIPT_BS) {
        Ok(r) => r,
        Err(e) => return with_steps(failed("ue", e), rec),
    };
    let WireMessage::AuthRequest(req) = rec.send("UE", "Core", WireMessage::AuthRequest(req)) else { unreachable!() };
    let ch = match core.handle_auth_request(&req) {
        Ok(c) => c,
        Err(e) => {
            if let Some(rej) = AuthReject::for_error(req.ue_nonce, &e) {
                rec.send("Core", "UE", WireMessage::AuthReject(rej));
            }
            return with_steps(failed("core", e), rec);
        }
    };
    let WireMessage::AuthChallenge(ch) = rec.send("Core", "UE", WireMessage::AuthChallenge(ch)) else { unreachable!() };
    let resp = match ue.handle_challenge(&ch, 1) {
        Ok(r) => r,
        Err(e) => return with_steps(failed("ue", e), rec),
    };
    let WireMessage::AuthResponse(resp) = rec.send("UE", "Core", WireMessage::AuthResponse(resp)) else { unreachable!() };
    let ctx = match core.verify_response(&resp, 2) {
        Ok(c) => c,
        Err(e) => {
            if let Some(rej) = AuthReject::for_error(resp.ue_nonce, &e) {
                let WireMessage::AuthReject(rej) = rec.send("Core", "UE", WireMessage::AuthReject(rej)) else {
                    unreachable!()
                };
                let _ = ue.handle_reject(&rej);
            }
            return with_steps(failed("core", e), rec);
        }
    };
    let fwd = match core_forward_session_key(&ctx, TRANSCRIPT_BS, Some(&mut kms), 2) {
        Ok(f) => f,
        Err(e) => return with_steps(failed("core", e), rec),
    };
    let WireMessage::KeyForward(fwd) = rec.send("Core", "BS", WireMessage::KeyForward(fwd)) else { unreachable!() };
    let bs_ctx = match bs_accept_forward(&fwd, TRANSCRIPT_BS, Some(&mut kms), 3) {
        Ok(c) => c,
        Err(e) => return with_steps(failed("bs", e), rec),
    };
    let ue_key = ue.session().map(|s| *s.session_key().as_bytes());
    assert_eq!(ue_key.as_ref(), Some(ctx.session_key().as_bytes()), "UE and core agree");
    assert_eq!(bs_ctx.session_key().as_bytes(), ctx.session_key().as_bytes(), "BS and core agree");
    with_steps(
        Transcript {
            steps: Vec::new(),
            outcome: Outcome::Established { schedule: ctx.schedule, session_key_id: ctx.key_id },
        },
        rec,
    )
}

fn preview(bytes: &[u8]) -> String {
    const MAX: usize = 32;
    if bytes.len() <= MAX {
        hex::encode(bytes)
    } else {
        format!("{}...", hex::encode(&bytes[..MAX]))
    }
}

impl Transcript {
    /// Annotated message-by-message listing.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "[{}] {} ({} -> {}), type {:#04x}, {} bytes{}",
                i + 1,
                s.message.step_name(),
                s.from,
                s.to,
                s.message.type_byte(),
                s.wire.len(),
                if s.tampered { ", TAMPERED in flight" } else { "" }
            );
            for (name, value) in s.message.fields() {
                let _ = writeln!(out, "    {name:<16} {:>6} B  {}", value.len(), preview(&value));
            }
            let _ = writeln!(out, "    hex {}", hex::encode(&s.wire));
        }
        match &self.outcome {
            Outcome::Established { schedule, session_key_id } => {
                let _ = writeln!(out, "key schedule: {}", schedule.describe());
                let _ = writeln!(out, "outcome: Established, session_key_id {session_key_id}");
            }
            Outcome::Failed { side, error } => {
                let _ = writeln!(out, "outcome: Failed at {side}: {error}");
            }
        }
        out
    }

    /// `step<TAB>hex` per message, the golden transcript format.
    pub fn golden_lines(&self) -> String {
        self.steps.iter().map(|s| format!("{}\t{}\n", s.message.step_name(), hex::encode(&s.wire))).collect()
    }
}
