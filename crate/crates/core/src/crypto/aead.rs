//! ChaCha20-Poly1305 envelopes.
//!
//! The envelope carries SHA-256 of the associated data; the AEAD itself
//! authenticates that digest, so flipping any bit of nonce, ciphertext,
//! tag or digest makes `open` fail.

use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use sha2::{Digest, Sha256};

use super::kdf::SymmetricKey;
use super::CryptoError;

pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AeadEnvelope {
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
    pub aad_digest: [u8; 32],
}

fn cipher(key: &SymmetricKey) -> ChaCha20Poly1305 {
    ChaCha20Poly1305::new(Key::from_slice(key.as_bytes()))
}

pub fn seal(key: &SymmetricKey, nonce: [u8; NONCE_LEN], aad: &[u8], plaintext: &[u8]) -> AeadEnvelope {
    let aad_digest: [u8; 32] = Sha256::digest(aad).into();
    let mut buf = plaintext.to_vec();
    let tag = cipher(key)
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), &aad_digest, &mut buf)
        .expect("plaintext within ChaCha20-Poly1305 limits");
    AeadEnvelope { nonce, ciphertext: buf, tag: tag.into(), aad_digest }
}

pub fn open(key: &SymmetricKey, env: &AeadEnvelope, aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let aad_digest: [u8; 32] = Sha256::digest(aad).into();
    if aad_digest != env.aad_digest {
        return Err(CryptoError::AadMismatch);
    }
    let mut buf = env.ciphertext.clone();
    cipher(key)
        .decrypt_in_place_detached(
            Nonce::from_slice(&env.nonce),
            &env.aad_digest,
            &mut buf,
            Tag::from_slice(&env.tag),
        )
        .map_err(|_| CryptoError::TagMismatch)?;
    Ok(buf)
}

/// 12-byte big-endian encoding of a message counter.
pub fn counter_nonce(counter: u64) -> [u8; NONCE_LEN] {
    let mut n = [0u8; NONCE_LEN];
    n[4..].copy_from_slice(&counter.to_be_bytes());
    n
}

pub fn nonce_counter(nonce: &[u8; NONCE_LEN]) -> Option<u64> {
    if nonce[..4] != [0; 4] {
        return None;
    }
    Some(u64::from_be_bytes(nonce[4..].try_into().expect("8 bytes")))
}
