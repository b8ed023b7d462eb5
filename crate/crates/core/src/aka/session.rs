//! Established session state, application data protection, and key
//! forwarding from core to the serving BS.

use std::fmt;

use zeroize::Zeroize;

use super::{AkaError, UeId};
use crate::crypto::aead::{self, counter_nonce, nonce_counter};
use crate::crypto::kdf::{kdf, SymmetricKey};
use crate::crypto::AeadEnvelope;
use crate::ids::{KeyId, NodeId, SimTime};
use crate::kms::{Kms, KmsError, KeyRequest};

pub const DEFAULT_NONCE_LIMIT: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeySchedule {
    Pqc,
    Hybrid,
    /// Received over the backbone; derivation happened at the core.
    Forwarded,
}

impl KeySchedule {
    pub fn describe(self) -> &'static str {
        match self {
            KeySchedule::Pqc => "session_key = kdf(\"session\", [K, RAND, ss])",
            KeySchedule::Hybrid => {
                "session_key = hybrid_combine(dh, kdf(\"session\", [K, RAND, ss])) = kdf(\"hybrid\", [dh, base])"
            }
            KeySchedule::Forwarded => "session_key forwarded by core",
        }
    }
}

/// Per-UE session key with its nonce discipline. Each context is used in
/// one direction: the sender advances `send_counter`, the receiver keeps a
/// strict high-water mark.
#[derive(Clone)]
pub struct SessionKeyContext {
    session_key: SymmetricKey,
    pub key_id: KeyId,
    pub ue_id: UeId,
    pub serving_bs: u32,
    pub schedule: KeySchedule,
    pub established_at: SimTime,
    send_counter: u64,
    recv_high_water: Option<u64>,
    nonce_limit: u64,
    confirmed: bool,
}

impl fmt::Debug for SessionKeyContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionKeyContext")
            .field("key_id", &self.key_id)
            .field("ue_id", &self.ue_id)
            .field("serving_bs", &self.serving_bs)
            .field("send_counter", &self.send_counter)
            .finish_non_exhaustive()
    }
}

pub fn session_key_id(key: &SymmetricKey) -> KeyId {
    KeyId(kdf("session-key-id", &[key.as_bytes()]).as_bytes()[..16].try_into().expect("16"))
}

impl SessionKeyContext {
    pub fn new(session_key: SymmetricKey, ue_id: UeId, serving_bs: u32, schedule: KeySchedule, now: SimTime) -> Self {
        SessionKeyContext {
            key_id: session_key_id(&session_key),
            session_key,
            ue_id,
            serving_bs,
            schedule,
            established_at: now,
            send_counter: 0,
            recv_high_water: None,
            nonce_limit: DEFAULT_NONCE_LIMIT,
            confirmed: false,
        }
    }

    pub fn with_nonce_limit(mut self, limit: u64) -> Self {
        self.nonce_limit = limit;
        self
    }

    pub fn session_key(&self) -> &SymmetricKey {
        &self.session_key
    }

    pub fn send_counter(&self) -> u64 {
        self.send_counter
    }

    pub fn recv_high_water(&self) -> Option<u64> {
        self.recv_high_water
    }

    /// True once a message under this key has been opened.
    pub fn is_confirmed(&self) -> bool {
        self.confirmed
    }

    fn aad(&self) -> [u8; 24] {
        let mut a = [0u8; 24];
        a[..8].copy_from_slice(&self.ue_id.0);
        a[8..].copy_from_slice(&self.key_id.0);
        a
    }
}

pub fn encrypt_app_message(ctx: &mut SessionKeyContext, payload: &[u8]) -> Result<AeadEnvelope, AkaError> {
    if ctx.send_counter >= ctx.nonce_limit {
        return Err(AkaError::NonceExhausted);
    }
    let env = aead::seal(&ctx.session_key, counter_nonce(ctx.send_counter), &ctx.aad(), payload);
    ctx.send_counter += 1;
    Ok(env)
}

pub fn decrypt_app_message(ctx: &mut SessionKeyContext, env: &AeadEnvelope) -> Result<Vec<u8>, AkaError> {
    let counter = nonce_counter(&env.nonce).ok_or(AkaError::MalformedNonce)?;
    if counter >= ctx.nonce_limit {
        return Err(AkaError::NonceExhausted);
    }
    if let Some(hw) = ctx.recv_high_water {
        if counter <= hw {
            return Err(AkaError::Replay { counter, high_water: hw });
        }
    }
    let pt = aead::open(&ctx.session_key, env, &ctx.aad())?;
    ctx.recv_high_water = Some(counter);
    ctx.confirmed = true;
    Ok(pt)
}

/// How the forwarded session key crosses the BS ↔ core link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardProtection {
    Qkd { qkd_key_id: KeyId, envelope: AeadEnvelope },
    /// Flagged plaintext transfer when the backbone has no QKD protection.
    Unprotected { session_key: [u8; 32] },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyForward {
    pub ue_id: UeId,
    pub bs: u32,
    pub session_key_id: KeyId,
    pub protection: ForwardProtection,
}

impl KeyForward {
    pub fn is_protected(&self) -> bool {
        matches!(self.protection, ForwardProtection::Qkd { .. })
    }
}

fn forward_aad(ue_id: UeId, bs: u32, key_id: KeyId) -> Vec<u8> {
    let mut a = b"key-forward".to_vec();
    a.extend_from_slice(&ue_id.0);
    a.extend_from_slice(&bs.to_be_bytes());
    a.extend_from_slice(&key_id.0);
    a
}

fn qkd_key(bytes: &mut Vec<u8>) -> Result<SymmetricKey, AkaError> {
    let key = bytes
        .get(..32)
        .map(|b| SymmetricKey::from_bytes(b.try_into().expect("32")))
        .ok_or(AkaError::Kms(KmsError::BitsUnavailable { requested: 256, available: bytes.len() * 8 }));
    bytes.zeroize();
    key
}

/// Sends the session key to `bs`. With a KMS the key is sealed under a
/// freshly granted QKD key; an empty pool blocks forwarding rather than
/// falling back to plaintext. Without a KMS the transfer is unprotected.
pub fn core_forward_session_key(
    ctx: &SessionKeyContext,
    bs: u32,
    kms: Option<&mut Kms>,
    now: SimTime,
) -> Result<KeyForward, AkaError> {
    let protection = match kms {
        None => ForwardProtection::Unprotected { session_key: *ctx.session_key.as_bytes() },
        Some(kms) => {
            let req = KeyRequest {
                requester: NodeId::Core,
                peer: NodeId::Bs(bs),
                purpose: "key-forward".into(),
                requested_bits: 256,
            };
            let mut grant = kms.request_key(&req, now).map_err(|e| match e {
                KmsError::EmptyPool(_) => AkaError::ForwardBlocked,
                e => AkaError::Kms(e),
            })?;
            let key = qkd_key(&mut grant.bytes)?;
            let envelope = aead::seal(
                &key,
                counter_nonce(0),
                &forward_aad(ctx.ue_id, bs, ctx.key_id),
                ctx.session_key.as_bytes(),
            );
            ForwardProtection::Qkd { qkd_key_id: grant.key_id, envelope }
        }
    };
    Ok(KeyForward { ue_id: ctx.ue_id, bs, session_key_id: ctx.key_id, protection })
}

/// BS side of forwarding. With a KMS, fetches the QKD key, opens the
/// envelope and consumes the key; an unprotected forward is refused.
pub fn bs_accept_forward(
    msg: &KeyForward,
    bs: u32,
    kms: Option<&mut Kms>,
    now: SimTime,
) -> Result<SessionKeyContext, AkaError> {
    if msg.bs != bs {
        return Err(AkaError::WrongBs { expected: msg.bs, actual: bs });
    }
    let key = match (&msg.protection, kms) {
        (ForwardProtection::Unprotected { session_key }, None) => SymmetricKey::from_bytes(*session_key),
        (ForwardProtection::Qkd { qkd_key_id, envelope }, Some(kms)) => {
            let mut bytes = kms.fetch_key(*qkd_key_id, NodeId::Bs(bs), now)?;
            let qkd = qkd_key(&mut bytes)?;
            let opened = aead::open(&qkd, envelope, &forward_aad(msg.ue_id, bs, msg.session_key_id));
            kms.consume_key(*qkd_key_id, now)?;
            let mut pt = opened?;
            let key = pt
                .as_slice()
                .try_into()
                .map(SymmetricKey::from_bytes)
                .map_err(|_| AkaError::KeyIdMismatch);
            pt.zeroize();
            key?
        }
        _ => return Err(AkaError::ProtectionMismatch),
    };
    if session_key_id(&key) != msg.session_key_id {
        return Err(AkaError::KeyIdMismatch);
    }
    Ok(SessionKeyContext::new(key, msg.ue_id, bs, KeySchedule::Forwarded, now))
}
