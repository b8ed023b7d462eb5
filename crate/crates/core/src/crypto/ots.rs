//! Lamport one-time signatures and a Merkle-committed pool of them.
//!
//! A key holds 2×256 secret preimages; the public key is their SHA-256
//! images. Signing SHA-256(message) reveals one preimage per digest bit.
//! [`OtsPool`] pre-provisions `2^height` keys and commits to them with a
//! Merkle root, the [`TrustAnchor`] a verifier pins.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};

use sha2::{Digest, Sha256};
use zeroize::Zeroize;

use super::kdf::kdf;
use super::rng::SeedStream;
use super::CryptoError;

pub const DIGEST_BITS: usize = 256;
pub const PUBLIC_HASHES: usize = 2 * DIGEST_BITS;
const HASH_LEN: usize = 32;

type Hash = [u8; HASH_LEN];

fn sha256(data: &[u8]) -> Hash {
    Sha256::digest(data).into()
}

fn digest_bit(d: &Hash, i: usize) -> usize {
    ((d[i / 8] >> (7 - i % 8)) & 1) as usize
}

#[derive(Clone, PartialEq, Eq)]
pub struct OtsPublicKey {
    hashes: Vec<Hash>,
}

impl fmt::Debug for OtsPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OtsPublicKey({})", hex::encode(&self.fingerprint()[..8]))
    }
}

impl OtsPublicKey {
    pub fn hashes(&self) -> &[Hash] {
        &self.hashes
    }

    /// Merkle leaf value for this key.
    pub fn fingerprint(&self) -> Hash {
        let mut h = Sha256::new();
        h.update([0x00]);
        for x in &self.hashes {
            h.update(x);
        }
        h.finalize().into()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.hashes.concat()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != PUBLIC_HASHES * HASH_LEN {
            return Err(CryptoError::MalformedEncoding("ots public key length"));
        }
        Ok(OtsPublicKey { hashes: split_hashes(bytes) })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtsSignature {
    preimages: Vec<Hash>,
}

impl OtsSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.preimages.concat()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if !bytes.len().is_multiple_of(HASH_LEN) || bytes.len() / HASH_LEN != DIGEST_BITS {
            return Err(CryptoError::SignatureLength {
                expected: DIGEST_BITS,
                actual: bytes.len() / HASH_LEN,
            });
        }
        Ok(OtsSignature { preimages: split_hashes(bytes) })
    }
}

fn split_hashes(bytes: &[u8]) -> Vec<Hash> {
    bytes.chunks_exact(HASH_LEN).map(|c| c.try_into().expect("chunk")).collect()
}

pub struct OtsKeyPair {
    secret: Vec<Hash>,
    public: OtsPublicKey,
    used: AtomicBool,
}

impl Drop for OtsKeyPair {
    fn drop(&mut self) {
        for s in &mut self.secret {
            s.zeroize();
        }
    }
}

impl fmt::Debug for OtsKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OtsKeyPair")
            .field("public", &self.public)
            .field("used", &self.is_used())
            .finish()
    }
}

impl OtsKeyPair {
    pub fn generate(seed: &[u8]) -> Self {
        let mut stream = SeedStream::new("ots-key", &[seed]);
        let secret: Vec<Hash> = (0..PUBLIC_HASHES).map(|_| stream.array()).collect();
        let hashes = secret.iter().map(|s| sha256(s)).collect();
        OtsKeyPair { secret, public: OtsPublicKey { hashes }, used: AtomicBool::new(false) }
    }

    pub fn public(&self) -> &OtsPublicKey {
        &self.public
    }

    pub fn is_used(&self) -> bool {
        self.used.load(Ordering::Acquire)
    }

    /// Signs once. The used flag flips atomically before any preimage is
    /// read, so concurrent callers cannot both succeed.
    pub fn sign(&self, message: &[u8]) -> Result<OtsSignature, CryptoError> {
        if self.used.swap(true, Ordering::AcqRel) {
            return Err(CryptoError::KeyReused);
        }
        let d = sha256(message);
        let preimages = (0..DIGEST_BITS).map(|i| self.secret[2 * i + digest_bit(&d, i)]).collect();
        Ok(OtsSignature { preimages })
    }
}

pub fn verify(public: &OtsPublicKey, message: &[u8], sig: &OtsSignature) -> bool {
    if sig.preimages.len() != DIGEST_BITS || public.hashes.len() != PUBLIC_HASHES {
        return false;
    }
    let d = sha256(message);
    sig.preimages
        .iter()
        .enumerate()
        .all(|(i, pre)| sha256(pre) == public.hashes[2 * i + digest_bit(&d, i)])
}

/// Merkle root over a pool's key fingerprints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrustAnchor(pub Hash);

/// A pool signature: which key, the key itself, its Merkle path, and the
/// Lamport signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolSignature {
    pub index: u32,
    pub public: OtsPublicKey,
    pub path: Vec<Hash>,
    pub signature: OtsSignature,
}

fn node_hash(left: &Hash, right: &Hash) -> Hash {
    let mut h = Sha256::new();
    h.update([0x01]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

pub struct OtsPool {
    seed: Hash,
    height: u32,
    // levels[0] = leaves, levels[height] = [root]
    levels: Vec<Vec<Hash>>,
    next: usize,
}

impl fmt::Debug for OtsPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OtsPool")
            .field("height", &self.height)
            .field("next", &self.next)
            .finish()
    }
}

impl OtsPool {
    pub const MAX_HEIGHT: u32 = 16;

    pub fn new(seed: &[u8], height: u32) -> Self {
        assert!(height <= Self::MAX_HEIGHT, "pool height too large");
        let seed = *kdf("ots-pool", &[seed]).as_bytes();
        let leaves: Vec<Hash> = (0..1usize << height)
            .map(|i| Self::key_at(&seed, i).public.fingerprint())
            .collect();
        let mut levels = vec![leaves];
        while levels.last().expect("non-empty").len() > 1 {
            let next = levels
                .last()
                .expect("non-empty")
                .chunks_exact(2)
                .map(|pair| node_hash(&pair[0], &pair[1]))
                .collect();
            levels.push(next);
        }
        OtsPool { seed, height, levels, next: 0 }
    }

    fn key_at(seed: &Hash, index: usize) -> OtsKeyPair {
        OtsKeyPair::generate(kdf("ots-pool-key", &[seed, &(index as u64).to_be_bytes()]).as_bytes())
    }

    pub fn anchor(&self) -> TrustAnchor {
        TrustAnchor(self.levels[self.height as usize][0])
    }

    pub fn capacity(&self) -> usize {
        1 << self.height
    }

    pub fn remaining(&self) -> usize {
        self.capacity() - self.next
    }

    /// Signs with the next unused key.
    pub fn sign_next(&mut self, message: &[u8]) -> Result<PoolSignature, CryptoError> {
        if self.next >= self.capacity() {
            return Err(CryptoError::PoolExhausted);
        }
        let index = self.next;
        self.next += 1;
        let key = Self::key_at(&self.seed, index);
        let signature = key.sign(message)?;
        let path = (0..self.height as usize)
            .map(|lvl| self.levels[lvl][(index >> lvl) ^ 1])
            .collect();
        Ok(PoolSignature { index: index as u32, public: key.public.clone(), path, signature })
    }
}

/// Checks the key's membership under `anchor`, then the signature.
pub fn verify_pool_signature(anchor: &TrustAnchor, message: &[u8], sig: &PoolSignature) -> bool {
    let mut node = sig.public.fingerprint();
    let mut idx = sig.index as usize;
    for sibling in &sig.path {
        node = if idx & 1 == 0 { node_hash(&node, sibling) } else { node_hash(sibling, &node) };
        idx >>= 1;
    }
    idx == 0 && node == anchor.0 && verify(&sig.public, message, &sig.signature)
}
