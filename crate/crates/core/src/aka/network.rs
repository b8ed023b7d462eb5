//! Core-side handshake: subscriber table, home KEM key, signing pool and
//! one state machine per transaction (keyed by `ue_nonce`).

use std::collections::BTreeMap;

use super::session::SessionKeyContext;
use super::{
    challenge_payload, compute_res, derive_session_key, AkaError, AuthChallenge, AuthRequest, AuthResponse, Identity,
    OpCounts, UeId, NONCE_LEN, RAND_LEN,
};
use crate::crypto::aead;
use crate::crypto::hybrid::StubDh;
use crate::crypto::kdf::{kdf, SymmetricKey};
use crate::crypto::kem::{self, KemKeyPair, KemPublicKey, LweParameters};
use crate::crypto::ots::{OtsPool, TrustAnchor};
use crate::ids::SimTime;

#[derive(Debug, Clone)]
pub struct CoreConfig {
    pub params: LweParameters,
    /// Include a classical share in every challenge.
    pub hybrid: bool,
    /// The signing pool holds `2^ots_height` one-time keys.
    pub ots_height: u32,
}

impl Default for CoreConfig {
    fn default() -> Self {
        CoreConfig { params: LweParameters::shipped(), hybrid: false, ots_height: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoreState {
    AwaitResponse,
    Established,
    Failed,
}

struct Pending {
    ue_id: UeId,
    master_key: SymmetricKey,
    rand: [u8; RAND_LEN],
    ephemeral: KemKeyPair,
    dh: Option<StubDh>,
    serving_bs: u32,
}

enum Txn {
    Await(Box<Pending>),
    Established(SessionKeyContext),
    Failed(AkaError),
}

pub struct CoreNetwork {
    config: CoreConfig,
    seed: [u8; 32],
    home: KemKeyPair,
    pool: OtsPool,
    subscribers: BTreeMap<Vec<u8>, SymmetricKey>,
    txns: BTreeMap<[u8; NONCE_LEN], Txn>,
    challenges: u64,
    ops: OpCounts,
}

impl std::fmt::Debug for CoreNetwork {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoreNetwork")
            .field("subscribers", &self.subscribers.len())
            .field("transactions", &self.txns.len())
            .field("pool", &self.pool)
            .finish_non_exhaustive()
    }
}

impl CoreNetwork {
    pub fn new(config: CoreConfig, seed: &[u8]) -> Result<Self, AkaError> {
        let seed = *kdf("core-seed", &[seed]).as_bytes();
        let home = kem::keygen(&config.params, kdf("core-home", &[&seed]).as_bytes())?;
        let pool = OtsPool::new(kdf("core-ots", &[&seed]).as_bytes(), config.ots_height);
        Ok(CoreNetwork {
            config,
            seed,
            home,
            pool,
            subscribers: BTreeMap::new(),
            txns: BTreeMap::new(),
            challenges: 0,
            ops: OpCounts::default(),
        })
    }

    pub fn add_subscriber(&mut self, supi: impl Into<Vec<u8>>, master_key: [u8; 32]) {
        self.subscribers.insert(supi.into(), SymmetricKey::from_bytes(master_key));
    }

    pub fn home_public(&self) -> &KemPublicKey {
        &self.home.public_key
    }

    pub fn anchor(&self) -> TrustAnchor {
        self.pool.anchor()
    }

    pub fn signatures_remaining(&self) -> usize {
        self.pool.remaining()
    }

    pub fn take_ops(&mut self) -> OpCounts {
        std::mem::take(&mut self.ops)
    }

    pub fn state(&self, ue_nonce: &[u8; NONCE_LEN]) -> Option<CoreState> {
        self.txns.get(ue_nonce).map(|t| match t {
            Txn::Await(_) => CoreState::AwaitResponse,
            Txn::Established(_) => CoreState::Established,
            Txn::Failed(_) => CoreState::Failed,
        })
    }

    pub fn failure(&self, ue_nonce: &[u8; NONCE_LEN]) -> Option<&AkaError> {
        match self.txns.get(ue_nonce) {
            Some(Txn::Failed(e)) => Some(e),
            _ => None,
        }
    }

    pub fn session(&self, ue_nonce: &[u8; NONCE_LEN]) -> Option<&SessionKeyContext> {
        match self.txns.get(ue_nonce) {
            Some(Txn::Established(ctx)) => Some(ctx),
            _ => None,
        }
    }

    /// Drops a finished transaction.
    pub fn forget(&mut self, ue_nonce: &[u8; NONCE_LEN]) {
        self.txns.remove(ue_nonce);
    }

    fn resolve(&mut self, identity: &Identity) -> Result<Vec<u8>, AkaError> {
        match identity {
            Identity::Plain(supi) => Ok(supi.clone()),
            Identity::Concealed(c) => {
                let ss = kem::decapsulate(&self.home.secret_key, &c.kem_ciphertext)
                    .map_err(|_| AkaError::MalformedConcealment)?;
                let key = kdf("suci", &[ss.as_bytes()]);
                self.ops.kem_decap += 1;
                self.ops.kdf += 1;
                self.ops.aead_bytes += c.sealed_supi.ciphertext.len() as u64;
                aead::open(&key, &c.sealed_supi, b"suci").map_err(|_| AkaError::MalformedConcealment)
            }
        }
    }

    /// Issues a signed challenge. Unknown subscribers and bad concealment
    /// allocate no state.
    pub fn handle_auth_request(&mut self, req: &AuthRequest) -> Result<AuthChallenge, AkaError> {
        if self.txns.contains_key(&req.ue_nonce) {
            return Err(AkaError::DuplicateRequest);
        }
        let supi = self.resolve(&req.identity)?;
        let master_key = self.subscribers.get(&supi).ok_or(AkaError::UnknownSubscriber)?.clone();
        if self.pool.remaining() == 0 {
            return Err(crate::crypto::CryptoError::PoolExhausted.into());
        }
        let ctr = self.challenges.to_be_bytes();
        self.challenges += 1;
        let rand: [u8; RAND_LEN] = kdf("core-rand", &[&self.seed, &ctr]).as_bytes()[..RAND_LEN]
            .try_into()
            .expect("16");
        let ephemeral = kem::keygen(&self.config.params, kdf("core-eph", &[&self.seed, &ctr]).as_bytes())?;
        let dh = self.config.hybrid.then(|| StubDh::from_seed(kdf("core-dh", &[&self.seed, &ctr]).as_bytes()));
        let classical = dh.as_ref().map(StubDh::public);
        let payload = challenge_payload(&rand, &ephemeral.public_key, &req.ue_nonce, classical);
        let signature = self.pool.sign_next(&payload)?;
        self.ops.kem_keygen += 1;
        self.ops.ots_sign += 1;
        self.ops.kdf += 3;
        self.ops.classical_dh += dh.is_some() as u64;
        let challenge = AuthChallenge {
            rand,
            core_ephemeral_kem_pk: ephemeral.public_key.clone(),
            ue_nonce: req.ue_nonce,
            classical,
            signature,
        };
        let pending = Pending {
            ue_id: UeId::from_supi(&supi),
            master_key,
            rand,
            ephemeral,
            dh,
            serving_bs: req.serving_bs,
        };
        self.txns.insert(req.ue_nonce, Txn::Await(Box::new(pending)));
        Ok(challenge)
    }

    /// Checks RES, decapsulates and derives the session key. Responses for
    /// finished transactions are refused without changing state.
    pub fn verify_response(&mut self, resp: &AuthResponse, now: SimTime) -> Result<SessionKeyContext, AkaError> {
        let txn = self.txns.get_mut(&resp.ue_nonce).ok_or(AkaError::UnknownTransaction)?;
        let Txn::Await(p) = txn else {
            return Err(AkaError::InvalidState(match txn {
                Txn::Established(_) => "Established",
                _ => "Failed",
            }));
        };
        let outcome = Self::complete(p, resp, now, &mut self.ops);
        *txn = match &outcome {
            Ok(ctx) => Txn::Established(ctx.clone()),
            Err(e) => Txn::Failed(e.clone()),
        };
        outcome
    }

    fn complete(p: &Pending, resp: &AuthResponse, now: SimTime, ops: &mut OpCounts) -> Result<SessionKeyContext, AkaError> {
        ops.kdf += 1;
        if compute_res(&p.master_key, &p.rand, &resp.ue_nonce) != resp.res {
            return Err(AkaError::ResMismatch);
        }
        let ss = kem::decapsulate(&p.ephemeral.secret_key, &resp.kem_ciphertext)?;
        ops.kem_decap += 1;
        let dh = match (&p.dh, resp.classical) {
            (None, _) => None,
            (Some(mine), Some(theirs)) => {
                ops.classical_dh += 1;
                Some(mine.shared(theirs))
            }
            (Some(_), None) => return Err(AkaError::ClassicalShareMissing),
        };
        let (key, schedule) = derive_session_key(&p.master_key, &p.rand, ss.as_bytes(), dh.as_ref());
        ops.kdf += 2 + dh.is_some() as u64;
        Ok(SessionKeyContext::new(key, p.ue_id, p.serving_bs, schedule, now))
    }
}
