//! PQC-augmented authentication and key agreement between UE and core.
//!
//! Message flow:
//!
//! ```text
//! UE                                         Core
//!  | AuthRequest(identity, ue_nonce)           |
//!  |------------------------------------------>|  resolve subscriber
//!  |   AuthChallenge(RAND, eph_pk, ue_nonce,    |  fresh RAND + ephemeral KEM key
//!  |                 [dh], pool signature)      |
//!  |<------------------------------------------|
//!  | verify signature, encapsulate, derive key  |
//!  | AuthResponse(ue_nonce, RES, kem_ct, [dh])  |
//!  |------------------------------------------>|  check RES, decapsulate, derive key
//!  |                                            |  KeyForward → serving BS
//! ```
//!
//! `RES = kdf("res", [K, RAND, ue_nonce])` and
//! `session_key = kdf("session", [K, RAND, ss])`. In hybrid mode the
//! session key is `hybrid_combine(dh, session_key)`.

mod network;
mod session;
mod ue;
pub mod transcript;
pub mod wire;

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::kdf::SymmetricKey;
use crate::crypto::{AeadEnvelope, CryptoError, KemCiphertext, KemPublicKey, PoolSignature};
use crate::kms::KmsError;

pub use network::{CoreConfig, CoreNetwork, CoreState};
pub use session::{
    bs_accept_forward, core_forward_session_key, decrypt_app_message, encrypt_app_message, ForwardProtection,
    KeyForward, KeySchedule, SessionKeyContext, DEFAULT_NONCE_LIMIT,
};
pub use ue::{UeConfig, UeHandshake, UeState};
pub use wire::{AppData, PlainData, Segment, WireError, WireMessage};

pub const NONCE_LEN: usize = 16;
pub const RAND_LEN: usize = 16;

/// Short pseudonymous UE handle used in AAD and key tables.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UeId(pub [u8; 8]);

impl UeId {
    pub fn from_supi(supi: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(b"qsmn-ue-id");
        h.update(supi);
        UeId(h.finalize()[..8].try_into().expect("8 bytes"))
    }
}

impl fmt::Display for UeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for UeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UeId({self})")
    }
}

/// Subscriber credentials held by the UE. The master key never leaves
/// this struct except as a KDF input.
#[derive(Clone)]
pub struct UeIdentity {
    supi: Vec<u8>,
    master_key: SymmetricKey,
}

impl fmt::Debug for UeIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UeIdentity").field("ue_id", &self.ue_id()).finish_non_exhaustive()
    }
}

impl UeIdentity {
    pub fn new(supi: impl Into<Vec<u8>>, master_key: [u8; 32]) -> Self {
        UeIdentity { supi: supi.into(), master_key: SymmetricKey::from_bytes(master_key) }
    }

    pub fn supi(&self) -> &[u8] {
        &self.supi
    }

    pub fn master_key(&self) -> &SymmetricKey {
        &self.master_key
    }

    pub fn ue_id(&self) -> UeId {
        UeId::from_supi(&self.supi)
    }
}

/// SUPI sealed under a fresh encapsulation to the home network key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcealedIdentity {
    pub kem_ciphertext: KemCiphertext,
    pub sealed_supi: AeadEnvelope,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Identity {
    Plain(Vec<u8>),
    Concealed(ConcealedIdentity),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthRequest {
    pub identity: Identity,
    pub ue_nonce: [u8; NONCE_LEN],
    pub serving_bs: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthChallenge {
    pub rand: [u8; RAND_LEN],
    pub core_ephemeral_kem_pk: KemPublicKey,
    pub ue_nonce: [u8; NONCE_LEN],
    /// Core's classical share in hybrid mode.
    pub classical: Option<u64>,
    pub signature: PoolSignature,
}

impl AuthChallenge {
    /// Bytes covered by the pool signature.
    pub fn signed_payload(&self) -> Vec<u8> {
        challenge_payload(&self.rand, &self.core_ephemeral_kem_pk, &self.ue_nonce, self.classical)
    }
}

pub(crate) fn challenge_payload(
    rand: &[u8; RAND_LEN],
    pk: &KemPublicKey,
    ue_nonce: &[u8; NONCE_LEN],
    classical: Option<u64>,
) -> Vec<u8> {
    let pk = pk.to_bytes();
    let mut out = Vec::with_capacity(64 + pk.len());
    out.extend_from_slice(b"qsmn-challenge-v1");
    out.extend_from_slice(rand);
    out.extend_from_slice(&(pk.len() as u32).to_be_bytes());
    out.extend_from_slice(&pk);
    out.extend_from_slice(ue_nonce);
    match classical {
        Some(x) => {
            out.push(1);
            out.extend_from_slice(&x.to_be_bytes());
        }
        None => out.push(0),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthResponse {
    pub ue_nonce: [u8; NONCE_LEN],
    pub res: [u8; 32],
    pub kem_ciphertext: KemCiphertext,
    pub classical: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectCode {
    UnknownSubscriber = 1,
    MalformedIdentity = 2,
    ResMismatch = 3,
    ChallengeUnavailable = 4,
}

impl RejectCode {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => RejectCode::UnknownSubscriber,
            2 => RejectCode::MalformedIdentity,
            3 => RejectCode::ResMismatch,
            4 => RejectCode::ChallengeUnavailable,
            _ => return None,
        })
    }
}

impl fmt::Display for RejectCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectCode::UnknownSubscriber => "unknown subscriber",
            RejectCode::MalformedIdentity => "malformed identity",
            RejectCode::ResMismatch => "RES mismatch",
            RejectCode::ChallengeUnavailable => "challenge unavailable",
        })
    }
}

/// Core → UE rejection. Unauthenticated, like its legacy counterpart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthReject {
    pub ue_nonce: [u8; NONCE_LEN],
    pub reason: RejectCode,
}

impl AuthReject {
    /// The rejection a failed core operation puts on the wire, if any.
    /// Duplicates and unknown transactions are dropped silently.
    pub fn for_error(ue_nonce: [u8; NONCE_LEN], err: &AkaError) -> Option<Self> {
        let reason = match err {
            AkaError::UnknownSubscriber => RejectCode::UnknownSubscriber,
            AkaError::MalformedConcealment => RejectCode::MalformedIdentity,
            AkaError::ResMismatch => RejectCode::ResMismatch,
            AkaError::Crypto(CryptoError::PoolExhausted) => RejectCode::ChallengeUnavailable,
            AkaError::Crypto(_) | AkaError::ClassicalShareMissing => RejectCode::ResMismatch,
            _ => return None,
        };
        Some(AuthReject { ue_nonce, reason })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AkaError {
    #[error("message not accepted in state {0}")]
    InvalidState(&'static str),
    #[error("unknown subscriber")]
    UnknownSubscriber,
    #[error("concealed identity could not be opened")]
    MalformedConcealment,
    #[error("challenge signature does not verify under the pinned anchor")]
    BadSignature,
    #[error("challenge echoes a stale ue_nonce")]
    StaleNonce,
    #[error("RES mismatch")]
    ResMismatch,
    #[error("hybrid mode required but classical share missing")]
    ClassicalShareMissing,
    #[error("no handshake in progress for this ue_nonce")]
    UnknownTransaction,
    #[error("duplicate request for an existing transaction")]
    DuplicateRequest,
    #[error("rejected by core: {0}")]
    Rejected(RejectCode),
    #[error("key forwarding blocked: no QKD key available")]
    ForwardBlocked,
    #[error("forward addressed to bs#{expected}, received at bs#{actual}")]
    WrongBs { expected: u32, actual: u32 },
    #[error("forward protection does not match the backbone policy")]
    ProtectionMismatch,
    #[error("forwarded key does not match its key id")]
    KeyIdMismatch,
    #[error("nonce counter exhausted; rekey required")]
    NonceExhausted,
    #[error("replayed counter {counter} (high-water mark {high_water})")]
    Replay { counter: u64, high_water: u64 },
    #[error("malformed nonce")]
    MalformedNonce,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Kms(#[from] KmsError),
}

/// Cryptographic operations performed by one party, for energy accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub kem_keygen: u64,
    pub kem_encap: u64,
    pub kem_decap: u64,
    pub ots_sign: u64,
    pub ots_verify: u64,
    pub kdf: u64,
    pub classical_dh: u64,
    pub aead_bytes: u64,
}

impl OpCounts {
    pub fn add(&mut self, o: &OpCounts) {
        self.kem_keygen += o.kem_keygen;
        self.kem_encap += o.kem_encap;
        self.kem_decap += o.kem_decap;
        self.ots_sign += o.ots_sign;
        self.ots_verify += o.ots_verify;
        self.kdf += o.kdf;
        self.classical_dh += o.classical_dh;
        self.aead_bytes += o.aead_bytes;
    }
}

/// `kdf("res", [K, RAND, ue_nonce])`
pub fn compute_res(master_key: &SymmetricKey, rand: &[u8; RAND_LEN], ue_nonce: &[u8; NONCE_LEN]) -> [u8; 32] {
    *crate::crypto::kdf("res", &[master_key.as_bytes(), rand, ue_nonce]).as_bytes()
}

/// `kdf("session", [K, RAND, ss])`, combined with the classical secret in
/// hybrid mode.
pub fn derive_session_key(
    master_key: &SymmetricKey,
    rand: &[u8; RAND_LEN],
    kem_secret: &[u8; 32],
    classical: Option<&[u8; 32]>,
) -> (SymmetricKey, KeySchedule) {
    let base = crate::crypto::kdf("session", &[master_key.as_bytes(), rand, kem_secret]);
    match classical {
        None => (base, KeySchedule::Pqc),
        Some(dh) => (
            crate::crypto::hybrid::hybrid_combine(dh, base.as_bytes()).expect("32-byte inputs"),
            KeySchedule::Hybrid,
        ),
    }
}
