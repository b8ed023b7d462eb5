//! UE handshake state machine.

use super::session::SessionKeyContext;
use super::{
    derive_session_key, compute_res, AkaError, AuthChallenge, AuthReject, AuthRequest, AuthResponse,
    ConcealedIdentity, Identity, OpCounts, UeIdentity, NONCE_LEN,
};
use crate::crypto::aead::{self, counter_nonce};
use crate::crypto::hybrid::StubDh;
use crate::crypto::kem::{self, KemPublicKey, LweParameters};
use crate::crypto::kdf::kdf;
use crate::crypto::ots::{verify_pool_signature, TrustAnchor};
use crate::ids::SimTime;

#[derive(Debug, Clone)]
pub struct UeConfig {
    pub params: LweParameters,
    /// Pinned commitment to the core's signing pool.
    pub anchor: TrustAnchor,
    /// Home network key; concealment is on when present.
    pub home_public: Option<KemPublicKey>,
    /// Refuse challenges without a classical share.
    pub require_hybrid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UeState {
    Idle,
    AwaitChallenge,
    Established,
    Failed,
}

#[derive(Debug)]
enum Inner {
    Idle,
    AwaitChallenge { ue_nonce: [u8; NONCE_LEN], serving_bs: u32, attempt: u64 },
    Established { ue_nonce: [u8; NONCE_LEN], ctx: SessionKeyContext },
    Failed(AkaError),
}

#[derive(Debug)]
pub struct UeHandshake {
    identity: UeIdentity,
    config: UeConfig,
    seed: [u8; 32],
    attempts: u64,
    inner: Inner,
    ops: OpCounts,
}

impl UeHandshake {
    pub fn new(identity: UeIdentity, config: UeConfig, seed: &[u8]) -> Self {
        UeHandshake {
            identity,
            config,
            seed: *kdf("ue-seed", &[seed]).as_bytes(),
            attempts: 0,
            inner: Inner::Idle,
            ops: OpCounts::default(),
        }
    }

    pub fn identity(&self) -> &UeIdentity {
        &self.identity
    }

    pub fn state(&self) -> UeState {
        match self.inner {
            Inner::Idle => UeState::Idle,
            Inner::AwaitChallenge { .. } => UeState::AwaitChallenge,
            Inner::Established { .. } => UeState::Established,
            Inner::Failed(_) => UeState::Failed,
        }
    }

    fn state_name(&self) -> &'static str {
        match self.state() {
            UeState::Idle => "Idle",
            UeState::AwaitChallenge => "AwaitChallenge",
            UeState::Established => "Established",
            UeState::Failed => "Failed",
        }
    }

    pub fn failure(&self) -> Option<&AkaError> {
        match &self.inner {
            Inner::Failed(e) => Some(e),
            _ => None,
        }
    }

    pub fn session(&self) -> Option<&SessionKeyContext> {
        match &self.inner {
            Inner::Established { ctx, .. } => Some(ctx),
            _ => None,
        }
    }

    pub fn session_mut(&mut self) -> Option<&mut SessionKeyContext> {
        match &mut self.inner {
            Inner::Established { ctx, .. } => Some(ctx),
            _ => None,
        }
    }

    /// Drops any session or failure and returns to Idle (handover, retry).
    pub fn reset(&mut self) {
        self.inner = Inner::Idle;
    }

    pub fn take_ops(&mut self) -> OpCounts {
        std::mem::take(&mut self.ops)
    }

    fn fail(&mut self, err: AkaError) -> AkaError {
        self.inner = Inner::Failed(err.clone());
        err
    }

    fn attempt_seed(&self, label: &str, attempt: u64) -> [u8; 32] {
        *kdf(label, &[&self.seed, &attempt.to_be_bytes()]).as_bytes()
    }

    pub fn initiate(&mut self, serving_bs: u32) -> Result<AuthRequest, AkaError> {
        if !matches!(self.inner, Inner::Idle) {
            return Err(AkaError::InvalidState(self.state_name()));
        }
        let attempt = self.attempts;
        self.attempts += 1;
        let mut ue_nonce: [u8; NONCE_LEN] = kdf("ue-nonce", &[&self.seed]).as_bytes()[..NONCE_LEN]
            .try_into()
            .expect("16");
        for (b, c) in ue_nonce[8..].iter_mut().zip(attempt.to_be_bytes()) {
            *b ^= c;
        }
        self.ops.kdf += 1;
        let identity = match &self.config.home_public {
            None => Identity::Plain(self.identity.supi.clone()),
            Some(home) => {
                let (ct, ss) = kem::encapsulate(home, &self.attempt_seed("ue-conceal", attempt))?;
                let key = kdf("suci", &[ss.as_bytes()]);
                let sealed = aead::seal(&key, counter_nonce(0), b"suci", &self.identity.supi);
                self.ops.kem_encap += 1;
                self.ops.kdf += 2;
                self.ops.aead_bytes += self.identity.supi.len() as u64;
                Identity::Concealed(ConcealedIdentity { kem_ciphertext: ct, sealed_supi: sealed })
            }
        };
        self.inner = Inner::AwaitChallenge { ue_nonce, serving_bs, attempt };
        Ok(AuthRequest { identity, ue_nonce, serving_bs })
    }

    /// Verifies the challenge, encapsulates to the core's ephemeral key and
    /// derives the session key before the core has confirmed. A rejection
    /// arriving later discards it.
    pub fn handle_challenge(&mut self, ch: &AuthChallenge, now: SimTime) -> Result<AuthResponse, AkaError> {
        let Inner::AwaitChallenge { ue_nonce, serving_bs, attempt } = self.inner else {
            return Err(AkaError::InvalidState(self.state_name()));
        };
        self.ops.ots_verify += 1;
        if !verify_pool_signature(&self.config.anchor, &ch.signed_payload(), &ch.signature) {
            return Err(self.fail(AkaError::BadSignature));
        }
        if ch.ue_nonce != ue_nonce {
            return Err(self.fail(AkaError::StaleNonce));
        }
        if self.config.require_hybrid && ch.classical.is_none() {
            return Err(self.fail(AkaError::ClassicalShareMissing));
        }
        if ch.core_ephemeral_kem_pk.params() != &self.config.params {
            let (e, a) = (self.config.params.id().0, ch.core_ephemeral_kem_pk.params().id().0);
            return Err(self.fail(AkaError::Crypto(crate::crypto::CryptoError::ParamsMismatch {
                expected: e,
                actual: a,
            })));
        }
        let (ct, ss) = match kem::encapsulate(&ch.core_ephemeral_kem_pk, &self.attempt_seed("ue-encap", attempt)) {
            Ok(x) => x,
            Err(e) => return Err(self.fail(e.into())),
        };
        self.ops.kem_encap += 1;
        let (classical_share, dh) = match ch.classical {
            None => (None, None),
            Some(core_pub) => {
                let mine = StubDh::from_seed(&self.attempt_seed("ue-dh", attempt));
                self.ops.classical_dh += 2;
                (Some(mine.public()), Some(mine.shared(core_pub)))
            }
        };
        let res = compute_res(&self.identity.master_key, &ch.rand, &ue_nonce);
        let (key, schedule) = derive_session_key(&self.identity.master_key, &ch.rand, ss.as_bytes(), dh.as_ref());
        self.ops.kdf += 3 + dh.is_some() as u64;
        let ctx = SessionKeyContext::new(key, self.identity.ue_id(), serving_bs, schedule, now);
        self.inner = Inner::Established { ue_nonce, ctx };
        Ok(AuthResponse { ue_nonce, res, kem_ciphertext: ct, classical: classical_share })
    }

    /// A matching rejection fails the handshake and erases any derived key.
    pub fn handle_reject(&mut self, rej: &AuthReject) -> Result<(), AkaError> {
        let pending = match &self.inner {
            Inner::AwaitChallenge { ue_nonce, .. } | Inner::Established { ue_nonce, .. } => *ue_nonce,
            _ => return Err(AkaError::InvalidState(self.state_name())),
        };
        if pending != rej.ue_nonce {
            return Err(AkaError::StaleNonce);
        }
        self.fail(AkaError::Rejected(rej.reason));
        Ok(())
    }
}
