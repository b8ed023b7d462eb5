//! Handshake fuzzer shared by the acceptance suite and the corruption test.
//!
//! One UE, one core and one BS exchange encoded messages through a bag that
//! delivers in random order, duplicates and replays, and optionally flips
//! bits in flight.

use qsmn_core::aka::{
    bs_accept_forward, core_forward_session_key, decrypt_app_message, encrypt_app_message, AuthReject, CoreConfig,
    CoreNetwork, UeConfig, UeHandshake, UeIdentity, WireMessage,
};
use qsmn_core::crypto::kem::LweParameters;
use qsmn_core::crypto::SeedStream;
use qsmn_core::ids::{KeyId, LinkId};
use qsmn_core::kms::Kms;
use qsmn_core::qkd::{QkdKeyBlock, RoundStatus};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dest {
    Ue,
    Core,
    Bs,
}

pub enum FuzzOutcome {
    Established,
    Failed,
    /// Two parties hold different keys; `traffic_opens` says whether the
    /// UE's first application message opened under the other key anyway.
    Mismatch { traffic_opens: bool },
}

const FUZZ_SUPI: &[u8] = b"imsi-001010000009999";

pub fn fuzz_handshake(case: u32, flip_prob: f64) -> FuzzOutcome {
    let mut rng = SeedStream::new("acceptance-handshake-fuzz", &[&case.to_be_bytes()]);
    let params = LweParameters::shipped();
    let hybrid = rng.bit();
    let conceal = rng.bit();
    let k: [u8; 32] = rng.array();
    let core_seed: [u8; 32] = rng.array();
    let ue_seed: [u8; 32] = rng.array();
    let mut core = CoreNetwork::new(CoreConfig { params: params.clone(), hybrid, ots_height: 2 }, &core_seed).unwrap();
    core.add_subscriber(FUZZ_SUPI, k);
    let cfg = UeConfig {
        params,
        anchor: core.anchor(),
        home_public: conceal.then(|| core.home_public().clone()),
        require_hybrid: hybrid,
    };
    let mut ue = UeHandshake::new(UeIdentity::new(FUZZ_SUPI, k), cfg, &ue_seed);
    let link = LinkId::Backhaul(0);
    let mut kms = Kms::new(1);
    kms.register_link(link);
    for j in 0..2u8 {
        let block = QkdKeyBlock {
            key_id: KeyId(rng.array()),
            bytes: (0..32).map(|_| rng.array::<1>()[0] ^ j).collect(),
            link_id: link,
            created_at: 0,
            source_status: RoundStatus::Distilled,
        };
        kms.ingest_key_block(block, 0).unwrap();
    }

    let req = ue.initiate(0).unwrap();
    let nonce = req.ue_nonce;
    let mut in_flight: Vec<(Dest, Vec<u8>)> = vec![(Dest::Core, WireMessage::AuthRequest(req).encode().unwrap())];
    let mut delivered: Vec<(Dest, Vec<u8>)> = Vec::new();
    let mut bs_ctx = None;
    let mut injections = 0;
    let mut now = 0;
    while !in_flight.is_empty() {
        now += 1;
        let idx = (rng.u64() % in_flight.len() as u64) as usize;
        let (dest, wire) = in_flight.swap_remove(idx);
        if injections < 8 && rng.bernoulli(0.3) {
            in_flight.push((dest, wire.clone()));
            injections += 1;
        }
        if injections < 8 && !delivered.is_empty() && rng.bernoulli(0.1) {
            let old = delivered[(rng.u64() % delivered.len() as u64) as usize].clone();
            in_flight.push(old);
            injections += 1;
        }
        let mut wire = wire;
        if flip_prob > 0.0 && rng.bernoulli(flip_prob) {
            let bit = (rng.u64() % (wire.len() as u64 * 8)) as usize;
            wire[bit / 8] ^= 1 << (bit % 8);
        }
        delivered.push((dest, wire.clone()));
        let Ok(msg) = WireMessage::decode(&wire) else { continue };
        match (dest, msg) {
            (Dest::Core, WireMessage::AuthRequest(r)) => match core.handle_auth_request(&r) {
                Ok(ch) => in_flight.push((Dest::Ue, WireMessage::AuthChallenge(ch).encode().unwrap())),
                Err(e) => {
                    if let Some(rej) = AuthReject::for_error(r.ue_nonce, &e) {
                        in_flight.push((Dest::Ue, WireMessage::AuthReject(rej).encode().unwrap()));
                    }
                }
            },
            (Dest::Ue, WireMessage::AuthChallenge(ch)) => {
                if let Ok(resp) = ue.handle_challenge(&ch, now) {
                    in_flight.push((Dest::Core, WireMessage::AuthResponse(resp).encode().unwrap()));
                }
            }
            (Dest::Ue, WireMessage::AuthReject(rej)) => {
                let _ = ue.handle_reject(&rej);
            }
            (Dest::Core, WireMessage::AuthResponse(resp)) => match core.verify_response(&resp, now) {
                Ok(ctx) => {
                    let fwd = core_forward_session_key(&ctx, 0, Some(&mut kms), now).unwrap();
                    in_flight.push((Dest::Bs, WireMessage::KeyForward(fwd).encode().unwrap()));
                }
                Err(e) => {
                    if let Some(rej) = AuthReject::for_error(resp.ue_nonce, &e) {
                        in_flight.push((Dest::Ue, WireMessage::AuthReject(rej).encode().unwrap()));
                    }
                }
            },
            (Dest::Bs, WireMessage::KeyForward(f))
                if bs_ctx.is_none() => {
                    bs_ctx = bs_accept_forward(&f, 0, Some(&mut kms), now).ok();
                }
            _ => {}
        }
    }

    let ue_key = ue.session().map(|s| *s.session_key().as_bytes());
    let core_ctx = core.session(&nonce).cloned();
    let core_key = core_ctx.as_ref().map(|s| *s.session_key().as_bytes());
    let bs_key = bs_ctx.as_ref().map(|s| *s.session_key().as_bytes());
    let agreed = match (ue_key, core_key, bs_key) {
        (Some(u), Some(c), Some(b)) if u == c && c == b => return FuzzOutcome::Established,
        (Some(u), Some(c), _) => u == c && bs_key.is_none_or(|b| b == c),
        (_, Some(c), Some(b)) => c == b,
        _ => true,
    };
    if agreed {
        return FuzzOutcome::Failed;
    }
    // Implicit confirmation: the UE's first message must not open elsewhere.
    let traffic_opens = match (ue.session_mut(), bs_ctx.or(core_ctx)) {
        (Some(u), Some(mut peer)) => {
            let env = encrypt_app_message(u, b"first message").unwrap();
            decrypt_app_message(&mut peer, &env).is_ok()
        }
        _ => false,
    };
    FuzzOutcome::Mismatch { traffic_opens }
}
