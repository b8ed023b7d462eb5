//! SHAKE256-backed deterministic randomness.

use rand_core::RngCore;
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::{Shake256, Shake256Reader};

use super::kdf::absorb_framed;

/// An unbounded byte stream derived from a label and framed seed inputs.
///
/// Two streams built from the same label and inputs yield the same bytes;
/// changing either gives an unrelated stream.
pub struct SeedStream {
    reader: Shake256Reader,
    bits: u64,
    bits_left: u32,
}

impl SeedStream {
    pub fn new(label: &str, inputs: &[&[u8]]) -> Self {
        let mut h = Shake256::default();
        h.update(b"QSMN-STREAM-v1");
        absorb_framed(&mut h, label, inputs);
        SeedStream {
            reader: h.finalize_xof(),
            bits: 0,
            bits_left: 0,
        }
    }

    pub fn fill(&mut self, out: &mut [u8]) {
        self.reader.read(out);
    }

    pub fn array<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        self.fill(&mut out);
        out
    }

    pub fn bit(&mut self) -> bool {
        if self.bits_left == 0 {
            self.bits = self.u64();
            self.bits_left = 64;
        }
        let b = self.bits & 1 == 1;
        self.bits >>= 1;
        self.bits_left -= 1;
        b
    }

    pub fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.array())
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        p > 0.0 && self.unit() < p
    }
}

impl RngCore for SeedStream {
    fn next_u32(&mut self) -> u32 {
        u32::from_le_bytes(self.array())
    }

    fn next_u64(&mut self) -> u64 {
        self.u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.fill(dst);
    }
}
