//! Desk-scale post-quantum primitives.
//!
//! Everything in here is a pure function of its inputs. Randomness is
//! always supplied by the caller as a seed and stretched with SHAKE256
//! through [`SeedStream`]; nothing reads OS entropy.
//!
//! - [`kem`]: ring-LWE key encapsulation with implicit rejection
//! - [`ots`]: Lamport one-time signatures and a Merkle-committed key pool
//! - [`aead`]: ChaCha20-Poly1305 envelopes
//! - [`kdf`]: length-framed SHAKE256 key derivation
//! - [`hybrid`]: classical + post-quantum secret combiner
//! - [`catalog`]: algorithm family profiles and per-domain scheme lists

pub mod aead;
pub mod catalog;
pub mod hybrid;
pub mod kdf;
pub mod kem;
pub mod ots;
pub mod rng;

pub use aead::{AeadEnvelope, NONCE_LEN, TAG_LEN};
pub use kdf::{kdf, kdf_expand, SymmetricKey};
pub use kem::{KemCiphertext, KemKeyPair, KemPublicKey, KemSecretKey, LweParameters, ParamsId, SharedSecret};
pub use ots::{OtsKeyPair, OtsPool, OtsPublicKey, OtsSignature, PoolSignature, TrustAnchor};
pub use rng::SeedStream;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("seed must be {expected} bytes, got {actual}")]
    InvalidSeedLength { expected: usize, actual: usize },
    #[error("invalid lattice parameters: {0}")]
    InvalidParameters(&'static str),
    #[error("malformed public key: {0}")]
    MalformedPublicKey(&'static str),
    #[error("malformed encoding: {0}")]
    MalformedEncoding(&'static str),
    #[error("parameter set mismatch: expected {expected:#010x}, got {actual:#010x}")]
    ParamsMismatch { expected: u32, actual: u32 },
    #[error("one-time signing key already used")]
    KeyReused,
    #[error("signature must carry {expected} preimages, got {actual}")]
    SignatureLength { expected: usize, actual: usize },
    #[error("one-time key pool exhausted")]
    PoolExhausted,
    #[error("secret must be 32 bytes, got {0}")]
    SecretLength(usize),
    #[error("authentication tag mismatch")]
    TagMismatch,
    #[error("associated data does not match envelope digest")]
    AadMismatch,
}
