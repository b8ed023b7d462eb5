//! Tag-length-value wire codec.
//!
//! A message is one type byte followed by its fields in fixed order, each
//! as a 2-byte big-endian length and the field bytes.
//!
//! | type | message        | fields |
//! |------|----------------|--------|
//! | 0x01 | AuthRequest    | mode (0 plain, 1 concealed), identity (supi or KEM ciphertext), sealed_supi (envelope or empty), ue_nonce (16), serving_bs (u32 BE) |
//! | 0x02 | AuthChallenge  | rand (16), kem_pk, ue_nonce (16), classical (empty or u64 BE), ots_index (u32 BE), ots_public (16384), ots_path (32 × height), ots_signature (8192) |
//! | 0x03 | AuthResponse   | ue_nonce (16), res (32), kem_ct, classical (empty or u64 BE) |
//! | 0x04 | KeyForward     | ue_id (8), bs (u32 BE), session_key_id (16), mode (0 unprotected, 1 QKD), qkd_key_id (16 or empty), payload (envelope or 32-byte key) |
//! | 0x05 | AppData        | segment (1), ue_id (8), key_id (16), envelope |
//! | 0x06 | AuthReject     | ue_nonce (16), reason (1) |
//! | 0x07 | PlainData      | segment (1), ue_id (8), payload |
//!
//! An envelope is `nonce (12) ‖ tag (16) ‖ aad_digest (32) ‖ ciphertext`.
//! KEM keys and ciphertexts start with their little-endian parameter-set
//! id, which selects the decoder.

use thiserror::Error;

use super::session::{ForwardProtection, KeyForward};
use super::{
    AuthChallenge, AuthReject, AuthRequest, AuthResponse, ConcealedIdentity, Identity, RejectCode, UeId, NONCE_LEN,
    RAND_LEN,
};
use crate::crypto::kem::{KemCiphertext, KemPublicKey, LweParameters, ParamsId};
use crate::crypto::ots::{OtsPublicKey, OtsSignature, PoolSignature};
use crate::crypto::{AeadEnvelope, CryptoError, NONCE_LEN as AEAD_NONCE_LEN, TAG_LEN};
use crate::ids::KeyId;

pub const MAX_FIELD_LEN: usize = u16::MAX as usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("empty message")]
    Empty,
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("expected {expected} fields, found {actual}")]
    FieldCount { expected: usize, actual: usize },
    #[error("field {field} has invalid length {len}")]
    FieldLength { field: &'static str, len: usize },
    #[error("field {field} has invalid value")]
    FieldValue { field: &'static str },
    #[error("field {field} exceeds {MAX_FIELD_LEN} bytes")]
    FieldTooLong { field: &'static str },
    #[error("unknown parameter set {0:#010x}")]
    UnknownParams(u32),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Which hop an application payload is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    UeBs = 0,
    BsCore = 1,
    CoreDn = 2,
}

impl Segment {
    pub fn name(self) -> &'static str {
        match self {
            Segment::UeBs => "ue-bs",
            Segment::BsCore => "bs-core",
            Segment::CoreDn => "core-dn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppData {
    pub segment: Segment,
    pub ue_id: UeId,
    pub key_id: KeyId,
    pub envelope: AeadEnvelope,
}

/// Application payload on a hop without protection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainData {
    pub segment: Segment,
    pub ue_id: UeId,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    AuthRequest(AuthRequest),
    AuthChallenge(AuthChallenge),
    AuthResponse(AuthResponse),
    KeyForward(KeyForward),
    AppData(AppData),
    AuthReject(AuthReject),
    PlainData(PlainData),
}

pub fn encode_envelope(env: &AeadEnvelope) -> Vec<u8> {
    let mut out = Vec::with_capacity(60 + env.ciphertext.len());
    out.extend_from_slice(&env.nonce);
    out.extend_from_slice(&env.tag);
    out.extend_from_slice(&env.aad_digest);
    out.extend_from_slice(&env.ciphertext);
    out
}

pub fn decode_envelope(field: &'static str, b: &[u8]) -> Result<AeadEnvelope, WireError> {
    const HEAD: usize = AEAD_NONCE_LEN + TAG_LEN + 32;
    if b.len() < HEAD {
        return Err(WireError::FieldLength { field, len: b.len() });
    }
    Ok(AeadEnvelope {
        nonce: b[..12].try_into().expect("12"),
        tag: b[12..28].try_into().expect("16"),
        aad_digest: b[28..60].try_into().expect("32"),
        ciphertext: b[60..].to_vec(),
    })
}

fn params_of(b: &[u8]) -> Result<LweParameters, WireError> {
    let id = u32::from_le_bytes(b.get(..4).ok_or(WireError::Truncated)?.try_into().expect("4"));
    LweParameters::by_id(ParamsId(id)).ok_or(WireError::UnknownParams(id))
}

fn opt_u64(v: Option<u64>) -> Vec<u8> {
    v.map(|x| x.to_be_bytes().to_vec()).unwrap_or_default()
}

impl WireMessage {
    pub fn type_byte(&self) -> u8 {
        match self {
            WireMessage::AuthRequest(_) => 0x01,
            WireMessage::AuthChallenge(_) => 0x02,
            WireMessage::AuthResponse(_) => 0x03,
            WireMessage::KeyForward(_) => 0x04,
            WireMessage::AppData(_) => 0x05,
            WireMessage::AuthReject(_) => 0x06,
            WireMessage::PlainData(_) => 0x07,
        }
    }

    /// Human-readable handshake step name.
    pub fn step_name(&self) -> &'static str {
        match self {
            WireMessage::AuthRequest(_) => "AUTH Request",
            WireMessage::AuthChallenge(_) => "Authentication Challenge",
            WireMessage::AuthResponse(_) => "Authentication Response",
            WireMessage::KeyForward(_) => "Key Forward",
            WireMessage::AppData(_) => "App Data",
            WireMessage::AuthReject(_) => "Auth Reject",
            WireMessage::PlainData(_) => "Plain Data",
        }
    }

    /// Named fields in wire order.
    pub fn fields(&self) -> Vec<(&'static str, Vec<u8>)> {
        match self {
            WireMessage::AuthRequest(r) => {
                let (mode, id, sealed) = match &r.identity {
                    Identity::Plain(supi) => (0u8, supi.clone(), Vec::new()),
                    Identity::Concealed(c) => (1, c.kem_ciphertext.to_bytes(), encode_envelope(&c.sealed_supi)),
                };
                vec![
                    ("mode", vec![mode]),
                    ("identity", id),
                    ("sealed_supi", sealed),
                    ("ue_nonce", r.ue_nonce.to_vec()),
                    ("serving_bs", r.serving_bs.to_be_bytes().to_vec()),
                ]
            }
            WireMessage::AuthChallenge(c) => vec![
                ("rand", c.rand.to_vec()),
                ("kem_pk", c.core_ephemeral_kem_pk.to_bytes()),
                ("ue_nonce", c.ue_nonce.to_vec()),
                ("classical", opt_u64(c.classical)),
                ("ots_index", c.signature.index.to_be_bytes().to_vec()),
                ("ots_public", c.signature.public.to_bytes()),
                ("ots_path", c.signature.path.concat()),
                ("ots_signature", c.signature.signature.to_bytes()),
            ],
            WireMessage::AuthResponse(r) => vec![
                ("ue_nonce", r.ue_nonce.to_vec()),
                ("res", r.res.to_vec()),
                ("kem_ct", r.kem_ciphertext.to_bytes()),
                ("classical", opt_u64(r.classical)),
            ],
            WireMessage::KeyForward(k) => {
                let (mode, qkd_id, payload) = match &k.protection {
                    ForwardProtection::Unprotected { session_key } => (0u8, Vec::new(), session_key.to_vec()),
                    ForwardProtection::Qkd { qkd_key_id, envelope } => {
                        (1, qkd_key_id.0.to_vec(), encode_envelope(envelope))
                    }
                };
                vec![
                    ("ue_id", k.ue_id.0.to_vec()),
                    ("bs", k.bs.to_be_bytes().to_vec()),
                    ("session_key_id", k.session_key_id.0.to_vec()),
                    ("mode", vec![mode]),
                    ("qkd_key_id", qkd_id),
                    ("payload", payload),
                ]
            }
            WireMessage::AppData(a) => vec![
                ("segment", vec![a.segment as u8]),
                ("ue_id", a.ue_id.0.to_vec()),
                ("key_id", a.key_id.0.to_vec()),
                ("envelope", encode_envelope(&a.envelope)),
            ],
            WireMessage::AuthReject(r) => {
                vec![("ue_nonce", r.ue_nonce.to_vec()), ("reason", vec![r.reason as u8])]
            }
            WireMessage::PlainData(p) => vec![
                ("segment", vec![p.segment as u8]),
                ("ue_id", p.ue_id.0.to_vec()),
                ("payload", p.payload.clone()),
            ],
        }
    }

    /// Offset of the first value byte of a field in the encoded message.
    pub fn field_offset(&self, name: &str) -> Option<usize> {
        let mut off = 1;
        for (n, v) in self.fields() {
            if n == name {
                return Some(off + 2);
            }
            off += 2 + v.len();
        }
        None
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let fields = self.fields();
        let mut out = Vec::with_capacity(1 + fields.iter().map(|(_, f)| 2 + f.len()).sum::<usize>());
        out.push(self.type_byte());
        for (name, f) in fields {
            let len = u16::try_from(f.len()).map_err(|_| WireError::FieldTooLong { field: name })?;
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(&f);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let (&ty, mut rest) = bytes.split_first().ok_or(WireError::Empty)?;
        let expected = match ty {
            0x01 => 5,
            0x02 => 8,
            0x03 => 4,
            0x04 => 6,
            0x05 => 4,
            0x06 => 2,
            0x07 => 3,
            other => return Err(WireError::UnknownType(other)),
        };
        let mut f: Vec<&[u8]> = Vec::with_capacity(expected);
        while !rest.is_empty() {
            if rest.len() < 2 {
                return Err(WireError::Truncated);
            }
            let len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
            let body = rest.get(2..2 + len).ok_or(WireError::Truncated)?;
            f.push(body);
            rest = &rest[2 + len..];
        }
        if f.len() != expected {
            return Err(WireError::FieldCount { expected, actual: f.len() });
        }
        Ok(match ty {
            0x01 => {
                let identity = match f[0] {
                    [0] if f[2].is_empty() => Identity::Plain(f[1].to_vec()),
                    [1] => {
                        let p = params_of(f[1])?;
                        Identity::Concealed(ConcealedIdentity {
                            kem_ciphertext: KemCiphertext::from_bytes(&p, f[1])?,
                            sealed_supi: decode_envelope("sealed_supi", f[2])?,
                        })
                    }
                    _ => return Err(WireError::FieldValue { field: "mode" }),
                };
                WireMessage::AuthRequest(AuthRequest {
                    identity,
                    ue_nonce: fixed("ue_nonce", f[3])?,
                    serving_bs: u32::from_be_bytes(fixed("serving_bs", f[4])?),
                })
            }
            0x02 => {
                let p = params_of(f[1])?;
                if !f[6].len().is_multiple_of(32) {
                    return Err(WireError::FieldLength { field: "ots_path", len: f[6].len() });
                }
                WireMessage::AuthChallenge(AuthChallenge {
                    rand: fixed::<RAND_LEN>("rand", f[0])?,
                    core_ephemeral_kem_pk: KemPublicKey::from_bytes(&p, f[1])?,
                    ue_nonce: fixed("ue_nonce", f[2])?,
                    classical: opt_fixed_u64("classical", f[3])?,
                    signature: PoolSignature {
                        index: u32::from_be_bytes(fixed("ots_index", f[4])?),
                        public: OtsPublicKey::from_bytes(f[5])?,
                        path: f[6].chunks_exact(32).map(|c| c.try_into().expect("32")).collect(),
                        signature: OtsSignature::from_bytes(f[7])?,
                    },
                })
            }
            0x03 => {
                let p = params_of(f[2])?;
                WireMessage::AuthResponse(AuthResponse {
                    ue_nonce: fixed("ue_nonce", f[0])?,
                    res: fixed("res", f[1])?,
                    kem_ciphertext: KemCiphertext::from_bytes(&p, f[2])?,
                    classical: opt_fixed_u64("classical", f[3])?,
                })
            }
            0x04 => {
                let protection = match f[3] {
                    [0] if f[4].is_empty() => {
                        ForwardProtection::Unprotected { session_key: fixed("payload", f[5])? }
                    }
                    [1] => ForwardProtection::Qkd {
                        qkd_key_id: KeyId(fixed("qkd_key_id", f[4])?),
                        envelope: decode_envelope("payload", f[5])?,
                    },
                    _ => return Err(WireError::FieldValue { field: "mode" }),
                };
                WireMessage::KeyForward(KeyForward {
                    ue_id: UeId(fixed("ue_id", f[0])?),
                    bs: u32::from_be_bytes(fixed("bs", f[1])?),
                    session_key_id: KeyId(fixed("session_key_id", f[2])?),
                    protection,
                })
            }
            0x05 => {
                WireMessage::AppData(AppData {
                    segment: segment(f[0])?,
                    ue_id: UeId(fixed("ue_id", f[1])?),
                    key_id: KeyId(fixed("key_id", f[2])?),
                    envelope: decode_envelope("envelope", f[3])?,
                })
            }
            0x07 => WireMessage::PlainData(PlainData {
                segment: segment(f[0])?,
                ue_id: UeId(fixed("ue_id", f[1])?),
                payload: f[2].to_vec(),
            }),
            _ => {
                let [r] = fixed::<1>("reason", f[1])?;
                WireMessage::AuthReject(AuthReject {
                    ue_nonce: fixed::<NONCE_LEN>("ue_nonce", f[0])?,
                    reason: RejectCode::from_u8(r).ok_or(WireError::FieldValue { field: "reason" })?,
                })
            }
        })
    }
}

fn segment(b: &[u8]) -> Result<Segment, WireError> {
    match b {
        [0] => Ok(Segment::UeBs),
        [1] => Ok(Segment::BsCore),
        [2] => Ok(Segment::CoreDn),
        _ => Err(WireError::FieldValue { field: "segment" }),
    }
}

fn fixed<const N: usize>(field: &'static str, b: &[u8]) -> Result<[u8; N], WireError> {
    b.try_into().map_err(|_| WireError::FieldLength { field, len: b.len() })
}

fn opt_fixed_u64(field: &'static str, b: &[u8]) -> Result<Option<u64>, WireError> {
    if b.is_empty() {
        Ok(None)
    } else {
        Ok(Some(u64::from_be_bytes(fixed(field, b)?)))
    }
}
