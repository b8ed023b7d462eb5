//! Key derivation.
//!
//! `kdf(label, inputs)` = first 32 bytes of
//! `SHAKE256("QSMN-KDF-v1" || frame(label, inputs))` where `frame` writes
//! the label and every input behind a 4-byte big-endian length, preceded by
//! the input count. The framing makes `["ab"]` and `["a", "b"]` distinct.

use std::fmt;

use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;
use zeroize::{Zeroize, ZeroizeOnDrop};

pub const KEY_LEN: usize = 32;

/// 32 bytes of symmetric key material.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SymmetricKey([u8; KEY_LEN]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SymmetricKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

pub(crate) fn absorb_framed(h: &mut Shake256, label: &str, inputs: &[&[u8]]) {
    h.update(&(label.len() as u32).to_be_bytes());
    h.update(label.as_bytes());
    h.update(&(inputs.len() as u32).to_be_bytes());
    for input in inputs {
        h.update(&(input.len() as u32).to_be_bytes());
        h.update(input);
    }
}

/// Fills `out` with key material bound to `label` and the ordered `inputs`.
///
/// Panics if `label` is empty.
pub fn kdf_expand(label: &str, inputs: &[&[u8]], out: &mut [u8]) {
    assert!(!label.is_empty(), "kdf label must be non-empty");
    let mut h = Shake256::default();
    h.update(b"QSMN-KDF-v1");
    absorb_framed(&mut h, label, inputs);
    h.finalize_xof().read(out);
}

/// Derives a 32-byte key. Panics if `label` is empty.
pub fn kdf(label: &str, inputs: &[&[u8]]) -> SymmetricKey {
    let mut out = [0u8; KEY_LEN];
    kdf_expand(label, inputs, &mut out);
    SymmetricKey(out)
}
