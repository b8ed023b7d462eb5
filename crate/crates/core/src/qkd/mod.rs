//! Monte-Carlo BB84 for the static backbone links.
//!
//! One round: Alice sends random bits in random bases, an optional
//! intercept-resend eavesdropper measures and re-prepares, the channel
//! flips bits with a fixed probability, Bob measures in random bases.
//! Sifting keeps matched-basis positions; a random sample of the sifted
//! string is disclosed to estimate the QBER and then discarded. Rounds
//! whose estimate exceeds the abort threshold emit no key.
//!
//! Reconciliation is parity bisection over shuffled blocks, checked
//! against the simulator's view of both strings. Privacy amplification is
//! a KDF over the reconciled bits, truncated to the target length after
//! subtracting the parity bits revealed during reconciliation.

mod reconcile;
mod trace;

pub use trace::{write_trace_csv, PulseRecord};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::kdf::{kdf, kdf_expand};
use crate::crypto::SeedStream;
use crate::ids::{KeyId, LinkId, SimTime};

pub const DEFAULT_ABORT_THRESHOLD: f64 = 0.11;
pub const MIN_PULSES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "model", content = "fraction")]
pub enum Eavesdropper {
    #[default]
    None,
    InterceptResendAll,
    /// Intercepts each pulse independently with this probability.
    InterceptResendFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QkdLinkConfig {
    pub pulses_per_round: usize,
    pub channel_flip_prob: f64,
    pub eavesdropper: Eavesdropper,
    pub qber_abort_threshold: f64,
    pub sample_fraction: f64,
    pub target_block_bits: usize,
}

impl Default for QkdLinkConfig {
    fn default() -> Self {
        QkdLinkConfig {
            pulses_per_round: 10_000,
            channel_flip_prob: 0.0,
            eavesdropper: Eavesdropper::None,
            qber_abort_threshold: DEFAULT_ABORT_THRESHOLD,
            sample_fraction: 0.1,
            target_block_bits: 256,
        }
    }
}

impl QkdLinkConfig {
    pub fn validate(&self) -> Result<(), QkdError> {
        let bad = |m: &'static str| Err(QkdError::InvalidConfig(m));
        if self.pulses_per_round < MIN_PULSES {
            return bad("pulses_per_round must be at least 1000");
        }
        if !(0.0..0.5).contains(&self.channel_flip_prob) {
            return bad("channel_flip_prob must be in [0, 0.5)");
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 1.0) {
            return bad("sample_fraction must be in (0, 1)");
        }
        if !(self.qber_abort_threshold > 0.0 && self.qber_abort_threshold < 0.5) {
            return bad("qber_abort_threshold must be in (0, 0.5)");
        }
        if self.target_block_bits == 0 || !self.target_block_bits.is_multiple_of(8) {
            return bad("target_block_bits must be a positive multiple of 8");
        }
        if let Eavesdropper::InterceptResendFraction(p) = self.eavesdropper {
            if !(0.0..=1.0).contains(&p) {
                return bad("eavesdropper fraction must be in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RoundStatus {
    Distilled,
    Aborted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QkdRoundResult {
    pub round_id: [u8; 16],
    pub sim_time: SimTime,
    pub pulses: usize,
    /// Matched-basis bits at each end, before the QBER sample is removed.
    pub sifted_bits_alice: Vec<bool>,
    pub sifted_bits_bob: Vec<bool>,
    /// Sorted positions (into the sifted strings) disclosed for QBER.
    pub disclosed_positions: Vec<usize>,
    pub sifted_fraction: f64,
    pub qber_estimate: f64,
    pub status: RoundStatus,
    pub disclosed_bits: usize,
    pub eve_interventions: usize,
    /// Undisclosed bits after reconciliation; empty when aborted.
    pub reconciled_alice: Vec<bool>,
    pub reconciled_bob: Vec<bool>,
    /// Parity bits revealed while reconciling.
    pub reconciliation_leak: usize,
}

impl QkdRoundResult {
    /// Bits available for privacy amplification.
    pub fn extractable_bits(&self) -> usize {
        self.reconciled_alice.len().saturating_sub(self.reconciliation_leak)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QkdKeyBlock {
    pub key_id: KeyId,
    pub bytes: Vec<u8>,
    pub link_id: LinkId,
    pub created_at: SimTime,
    /// Status of the round the block came from. The KMS refuses anything
    /// but `Distilled`.
    pub source_status: RoundStatus,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QkdError {
    #[error("invalid QKD configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("round aborted; no key material")]
    NotDistilled,
    #[error("insufficient sifted material: {available} bits extractable, {requested} requested")]
    InsufficientMaterial { available: usize, requested: usize },
    #[error("target length must be a positive multiple of 8 bits")]
    InvalidTarget,
    #[error("the two ends distilled different keys")]
    ReconciliationMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Alice,
    Bob,
}

pub fn run_bb84_round(config: &QkdLinkConfig, seed: &[u8], sim_time: SimTime) -> Result<QkdRoundResult, QkdError> {
    run(config, seed, sim_time, None)
}

/// Same as [`run_bb84_round`], also returning one record per pulse.
pub fn run_bb84_round_traced(
    config: &QkdLinkConfig,
    seed: &[u8],
    sim_time: SimTime,
) -> Result<(QkdRoundResult, Vec<PulseRecord>), QkdError> {
    let mut records = Vec::with_capacity(config.pulses_per_round);
    let result = run(config, seed, sim_time, Some(&mut records))?;
    Ok((result, records))
}

fn run(
    config: &QkdLinkConfig,
    seed: &[u8],
    sim_time: SimTime,
    mut trace: Option<&mut Vec<PulseRecord>>,
) -> Result<QkdRoundResult, QkdError> {
    config.validate()?;
    let time = sim_time.to_be_bytes();
    let mut rng = SeedStream::new("bb84-round", &[seed, &time]);
    let round_id: [u8; 16] = kdf("bb84-round-id", &[seed, &time]).as_bytes()[..16].try_into().expect("16");

    let mut sifted_alice = Vec::with_capacity(config.pulses_per_round / 2 + 64);
    let mut sifted_bob = Vec::with_capacity(config.pulses_per_round / 2 + 64);
    let mut sifted_pulse = Vec::new();
    let mut eve_interventions = 0;

    for pulse in 0..config.pulses_per_round {
        let alice_bit = rng.bit();
        let alice_basis = rng.bit();
        let (mut bit, mut basis) = (alice_bit, alice_basis);

        let eve_acts = match config.eavesdropper {
            Eavesdropper::None => false,
            Eavesdropper::InterceptResendAll => true,
            Eavesdropper::InterceptResendFraction(p) => rng.bernoulli(p),
        };
        if eve_acts {
            eve_interventions += 1;
            let eve_basis = rng.bit();
            let eve_bit = if eve_basis == basis { bit } else { rng.bit() };
            bit = eve_bit;
            basis = eve_basis;
        }

        if rng.bernoulli(config.channel_flip_prob) {
            bit = !bit;
        }

        let bob_basis = rng.bit();
        let bob_bit = if bob_basis == basis { bit } else { rng.bit() };

        let sifted = alice_basis == bob_basis;
        if sifted {
            sifted_alice.push(alice_bit);
            sifted_bob.push(bob_bit);
            sifted_pulse.push(pulse);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(PulseRecord {
                pulse_index: pulse,
                alice_bit: alice_bit as u8,
                alice_basis: alice_basis as u8,
                eve_acted: eve_acts as u8,
                bob_basis: bob_basis as u8,
                bob_bit: bob_bit as u8,
                sifted: sifted as u8,
                disclosed: 0,
            });
        }
    }

    let sifted_len = sifted_alice.len();
    let sample = if sifted_len == 0 {
        0
    } else {
        ((sifted_len as f64 * config.sample_fraction).round() as usize).clamp(1, sifted_len)
    };
    let mut disclosed_positions = index::sample(&mut rng, sifted_len, sample).into_vec();
    disclosed_positions.sort_unstable();

    let errors = disclosed_positions.iter().filter(|&&i| sifted_alice[i] != sifted_bob[i]).count();
    let qber_estimate = if sample == 0 { 0.0 } else { errors as f64 / sample as f64 };

    if let Some(t) = trace {
        for &i in &disclosed_positions {
            t[sifted_pulse[i]].disclosed = 1;
        }
    }

    let mut result = QkdRoundResult {
        round_id,
        sim_time,
        pulses: config.pulses_per_round,
        sifted_fraction: sifted_len as f64 / config.pulses_per_round as f64,
        qber_estimate,
        status: RoundStatus::Aborted,
        disclosed_bits: sample,
        eve_interventions,
        reconciled_alice: Vec::new(),
        reconciled_bob: Vec::new(),
        reconciliation_leak: 0,
        disclosed_positions,
        sifted_bits_alice: sifted_alice,
        sifted_bits_bob: sifted_bob,
    };

    if detect_eavesdropper(&result, config) {
        return Ok(result);
    }

    let keep = |bits: &[bool]| -> Vec<bool> {
        let mut d = result.disclosed_positions.iter().peekable();
        bits.iter()
            .enumerate()
            .filter(|(i, _)| {
                if d.peek() == Some(&i) {
                    d.next();
                    false
                } else {
                    true
                }
            })
            .map(|(_, &b)| b)
            .collect()
    };
    let alice = keep(&result.sifted_bits_alice);
    let mut bob = keep(&result.sifted_bits_bob);
    if let Some(leak) = reconcile::parity_bisection(&alice, &mut bob, qber_estimate, &mut rng) {
        result.status = RoundStatus::Distilled;
        result.reconciled_alice = alice;
        result.reconciled_bob = bob;
        result.reconciliation_leak = leak;
    }
    Ok(result)
}

/// True iff the estimated QBER is strictly above the abort threshold.
pub fn detect_eavesdropper(result: &QkdRoundResult, config: &QkdLinkConfig) -> bool {
    result.qber_estimate > config.qber_abort_threshold
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

pub fn key_id_for(result: &QkdRoundResult, link_id: LinkId) -> KeyId {
    let k = kdf("qkd-key-id", &[&link_id.to_bytes(), &result.round_id]);
    KeyId(k.as_bytes()[..16].try_into().expect("16"))
}

/// Privacy amplification from one end's reconciled string.
pub fn distill_side(
    result: &QkdRoundResult,
    side: Side,
    link_id: LinkId,
    target_bits: usize,
) -> Result<QkdKeyBlock, QkdError> {
    if result.status != RoundStatus::Distilled {
        return Err(QkdError::NotDistilled);
    }
    if target_bits == 0 || !target_bits.is_multiple_of(8) {
        return Err(QkdError::InvalidTarget);
    }
    let available = result.extractable_bits();
    if target_bits > available {
        return Err(QkdError::InsufficientMaterial { available, requested: target_bits });
    }
    let bits = match side {
        Side::Alice => &result.reconciled_alice,
        Side::Bob => &result.reconciled_bob,
    };
    let mut bytes = vec![0u8; target_bits / 8];
    kdf_expand(
        "qkd-privacy-amplification",
        &[&link_id.to_bytes(), &result.round_id, &(bits.len() as u64).to_be_bytes(), &pack_bits(bits)],
        &mut bytes,
    );
    Ok(QkdKeyBlock {
        key_id: key_id_for(result, link_id),
        bytes,
        link_id,
        created_at: result.sim_time,
        source_status: result.status,
    })
}

/// Distills at both ends and returns the block once they agree.
pub fn distill_key_block(result: &QkdRoundResult, link_id: LinkId, target_bits: usize) -> Result<QkdKeyBlock, QkdError> {
    let a = distill_side(result, Side::Alice, link_id, target_bits)?;
    let b = distill_side(result, Side::Bob, link_id, target_bits)?;
    if a != b {
        return Err(QkdError::ReconciliationMismatch);
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QkdLinkConfig {
        QkdLinkConfig { pulses_per_round: 4000, ..Default::default() }
    }

    #[test]
    fn noiseless_no_eve_is_clean() {
        let r = run_bb84_round(&cfg(), b"s", 0).unwrap();
        assert_eq!(r.qber_estimate, 0.0);
        assert_eq!(r.status, RoundStatus::Distilled);
        assert_eq!(r.sifted_bits_alice, r.sifted_bits_bob);
        assert_eq!(r.reconciliation_leak, 0);
    }

    #[test]
    fn full_intercept_resend_aborts() {
        let c = QkdLinkConfig { eavesdropper: Eavesdropper::InterceptResendAll, ..cfg() };
        let r = run_bb84_round(&c, b"s", 0).unwrap();
        assert!(r.qber_estimate > 0.15, "{}", r.qber_estimate);
        assert_eq!(r.status, RoundStatus::Aborted);
        assert!(r.reconciled_alice.is_empty());
        assert_eq!(r.eve_interventions, 4000);
        assert_eq!(distill_key_block(&r, LinkId::CoreDn, 256), Err(QkdError::NotDistilled));
    }

    #[test]
    fn noisy_round_reconciles() {
        let c = QkdLinkConfig { channel_flip_prob: 0.05, ..cfg() };
        let r = run_bb84_round(&c, b"noisy", 5).unwrap();
        assert_eq!(r.status, RoundStatus::Distilled);
        assert_eq!(r.reconciled_alice, r.reconciled_bob);
        assert!(r.reconciliation_leak > 0);
        assert_eq!(r.sifted_bits_alice.len(), r.sifted_bits_bob.len());
        assert_eq!(r.reconciled_alice.len(), r.sifted_bits_alice.len() - r.disclosed_bits);
    }

    #[test]
    fn both_ends_distill_same_block() {
        let c = QkdLinkConfig { channel_flip_prob: 0.03, ..cfg() };
        let r = run_bb84_round(&c, b"ends", 1).unwrap();
        let a = distill_side(&r, Side::Alice, LinkId::Backhaul(0), 256).unwrap();
        let b = distill_side(&r, Side::Bob, LinkId::Backhaul(0), 256).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bytes.len(), 32);
    }

    #[test]
    fn different_seeds_different_blocks() {
        let r1 = run_bb84_round(&cfg(), b"one", 0).unwrap();
        let r2 = run_bb84_round(&cfg(), b"two", 0).unwrap();
        let b1 = distill_key_block(&r1, LinkId::CoreDn, 256).unwrap();
        let b2 = distill_key_block(&r2, LinkId::CoreDn, 256).unwrap();
        assert_ne!(b1.key_id, b2.key_id);
        assert_ne!(b1.bytes, b2.bytes);
    }

    #[test]
    fn oversized_target_rejected() {
        let r = run_bb84_round(&cfg(), b"s", 0).unwrap();
        let too_many = (r.extractable_bits() / 8 + 1) * 8;
        assert!(matches!(
            distill_key_block(&r, LinkId::CoreDn, too_many),
            Err(QkdError::InsufficientMaterial { .. })
        ));
        assert_eq!(distill_key_block(&r, LinkId::CoreDn, 12), Err(QkdError::InvalidTarget));
    }

    #[test]
    fn detection_is_strict_inequality() {
        let c = cfg();
        let mut r = run_bb84_round(&c, b"s", 0).unwrap();
        r.qber_estimate = 0.30;
        assert!(detect_eavesdropper(&r, &c));
        r.qber_estimate = 0.0;
        assert!(!detect_eavesdropper(&r, &c));
        r.qber_estimate = c.qber_abort_threshold;
        assert!(!detect_eavesdropper(&r, &c));
    }

    #[test]
    fn deterministic() {
        let c = QkdLinkConfig { channel_flip_prob: 0.02, ..cfg() };
        assert_eq!(run_bb84_round(&c, b"d", 9).unwrap(), run_bb84_round(&c, b"d", 9).unwrap());
        assert_ne!(run_bb84_round(&c, b"d", 9).unwrap(), run_bb84_round(&c, b"d", 10).unwrap());
    }

    #[test]
    fn config_validation() {
        let bad = [
            QkdLinkConfig { pulses_per_round: 999, ..cfg() },
            QkdLinkConfig { channel_flip_prob: 0.5, ..cfg() },
            QkdLinkConfig { sample_fraction: 0.0, ..cfg() },
            QkdLinkConfig { sample_fraction: 1.0, ..cfg() },
            QkdLinkConfig { qber_abort_threshold: 0.5, ..cfg() },
            QkdLinkConfig { target_block_bits: 100, ..cfg() },
            QkdLinkConfig { eavesdropper: Eavesdropper::InterceptResendFraction(1.5), ..cfg() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        assert!(cfg().validate().is_ok());
    }

    #[test]
    fn trace_marks_sifted_and_disclosed() {
        let (r, t) = run_bb84_round_traced(&cfg(), b"t", 0).unwrap();
        assert_eq!(t.len(), 4000);
        assert_eq!(t.iter().filter(|p| p.sifted == 1).count(), r.sifted_bits_alice.len());
        assert_eq!(t.iter().filter(|p| p.disclosed == 1).count(), r.disclosed_bits);
        assert!(t.iter().all(|p| p.disclosed == 0 || p.sifted == 1));
        assert!(t.iter().all(|p| (p.sifted == 1) == (p.alice_basis == p.bob_basis)));
        assert_eq!(r, run_bb84_round(&cfg(), b"t", 0).unwrap());
    }
}
