//! Per-operation energy and latency cost tables.
//!
//! The defaults are order-of-magnitude placeholders, not measurements.
//! Comparisons between placements should rest on the operation counts,
//! which are exact; the tables only turn counts into joules and delays.

use serde::{Deserialize, Serialize};

use crate::aka::OpCounts;

/// Joules per operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyCostTable {
    pub kem_keygen: f64,
    pub kem_encap: f64,
    pub kem_decap: f64,
    pub ots_sign: f64,
    pub ots_verify: f64,
    pub aead_per_byte: f64,
    pub qkd_round: f64,
    pub kdf: f64,
    pub classical_dh: f64,
}

impl Default for EnergyCostTable {
    fn default() -> Self {
        EnergyCostTable {
            kem_keygen: 2.0e-4,
            kem_encap: 2.5e-4,
            kem_decap: 2.0e-4,
            ots_sign: 1.0e-3,
            ots_verify: 5.0e-4,
            aead_per_byte: 5.0e-9,
            qkd_round: 1.0,
            kdf: 1.0e-6,
            classical_dh: 1.0e-4,
        }
    }
}

fn check(fields: &[(&str, f64)]) -> Result<(), String> {
    match fields.iter().find(|(_, v)| !v.is_finite() || *v < 0.0) {
        Some((name, v)) => Err(format!("{name} = {v} must be finite and non-negative")),
        None => Ok(()),
    }
}

impl EnergyCostTable {
    pub fn validate(&self) -> Result<(), String> {
        check(&[
            ("kem_keygen", self.kem_keygen),
            ("kem_encap", self.kem_encap),
            ("kem_decap", self.kem_decap),
            ("ots_sign", self.ots_sign),
            ("ots_verify", self.ots_verify),
            ("aead_per_byte", self.aead_per_byte),
            ("qkd_round", self.qkd_round),
            ("kdf", self.kdf),
            ("classical_dh", self.classical_dh),
        ])
    }

    /// Energy of a set of handshake operations, AEAD bytes included.
    pub fn ops(&self, o: &OpCounts) -> f64 {
        o.kem_keygen as f64 * self.kem_keygen
            + o.kem_encap as f64 * self.kem_encap
            + o.kem_decap as f64 * self.kem_decap
            + o.ots_sign as f64 * self.ots_sign
            + o.ots_verify as f64 * self.ots_verify
            + o.kdf as f64 * self.kdf
            + o.classical_dh as f64 * self.classical_dh
            + o.aead_bytes as f64 * self.aead_per_byte
    }

    pub fn aead(&self, bytes: u64) -> f64 {
        bytes as f64 * self.aead_per_byte
    }

    pub fn qkd(&self, rounds: u64) -> f64 {
        rounds as f64 * self.qkd_round
    }
}

/// Microseconds per operation, added to link latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyCostTable {
    pub kem_keygen: f64,
    pub kem_encap: f64,
    pub kem_decap: f64,
    pub ots_sign: f64,
    pub ots_verify: f64,
    pub aead_per_byte: f64,
    pub kdf: f64,
    pub classical_dh: f64,
}

impl Default for LatencyCostTable {
    fn default() -> Self {
        LatencyCostTable {
            kem_keygen: 60.0,
            kem_encap: 80.0,
            kem_decap: 70.0,
            ots_sign: 400.0,
            ots_verify: 250.0,
            aead_per_byte: 0.002,
            kdf: 2.0,
            classical_dh: 40.0,
        }
    }
}

impl LatencyCostTable {
    pub fn validate(&self) -> Result<(), String> {
        check(&[
            ("kem_keygen", self.kem_keygen),
            ("kem_encap", self.kem_encap),
            ("kem_decap", self.kem_decap),
            ("ots_sign", self.ots_sign),
            ("ots_verify", self.ots_verify),
            ("aead_per_byte", self.aead_per_byte),
            ("kdf", self.kdf),
            ("classical_dh", self.classical_dh),
        ])
    }

    pub fn ops_us(&self, o: &OpCounts) -> f64 {
        o.kem_keygen as f64 * self.kem_keygen
            + o.kem_encap as f64 * self.kem_encap
            + o.kem_decap as f64 * self.kem_decap
            + o.ots_sign as f64 * self.ots_sign
            + o.ots_verify as f64 * self.ots_verify
            + o.kdf as f64 * self.kdf
            + o.classical_dh as f64 * self.classical_dh
            + o.aead_bytes as f64 * self.aead_per_byte
    }

    /// Processing delay rounded up to whole simulation milliseconds.
    pub fn delay_ms(&self, o: &OpCounts) -> u64 {
        (self.ops_us(o) / 1000.0).ceil() as u64
    }
}
