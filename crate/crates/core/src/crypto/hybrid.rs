//! Classical + post-quantum key combination.
//!
//! [`StubDh`] is a hashed Diffie-Hellman over the Mersenne prime field
//! `2^61 - 1`. It is NOT SECURE and exists only so the simulator has a
//! classical secret to feed the combiner.

use sha2::{Digest, Sha256};

use super::kdf::{kdf, SymmetricKey};
use super::rng::SeedStream;
use super::CryptoError;

/// `kdf("hybrid", [classical, pqc])`; both inputs must be 32 bytes.
pub fn hybrid_combine(classical: &[u8], pqc: &[u8]) -> Result<SymmetricKey, CryptoError> {
    for s in [classical, pqc] {
        if s.len() != 32 {
            return Err(CryptoError::SecretLength(s.len()));
        }
    }
    Ok(kdf("hybrid", &[classical, pqc]))
}

const P: u64 = (1 << 61) - 1;
const G: u64 = 3;

fn mul_mod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % P as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base %= P;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base);
        }
        base = mul_mod(base, base);
        exp >>= 1;
    }
    acc
}

/// Insecure toy Diffie-Hellman share. Simulation only.
#[derive(Debug, Clone)]
pub struct StubDh {
    secret: u64,
    public: u64,
}

impl StubDh {
    pub fn from_seed(seed: &[u8]) -> Self {
        let mut s = SeedStream::new("stub-dh", &[seed]);
        let secret = 2 + s.u64() % (P - 3);
        StubDh { secret, public: pow_mod(G, secret) }
    }

    pub fn public(&self) -> u64 {
        self.public
    }

    pub fn shared(&self, peer_public: u64) -> [u8; 32] {
        let z = pow_mod(peer_public, self.secret);
        let mut h = Sha256::new();
        h.update(b"stub-dh-shared");
        h.update(z.to_be_bytes());
        h.finalize().into()
    }
}
