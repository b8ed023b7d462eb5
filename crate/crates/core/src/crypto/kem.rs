//! Ring-LWE key encapsulation.
//!
//! Arithmetic lives in `Z_q[X]/(X^n + 1)`; a public polynomial `a` acts on
//! vectors as its negacyclic matrix, so `b = A·s + e` is the polynomial
//! product `a*s + e`. The CPA core is Regev-style encryption of one bit per
//! coefficient, wrapped in a Fujisaki-Okamoto style transform: the
//! encapsulator's coins are derived from the message, decapsulation
//! re-encrypts and falls back to a secret rejection key when the
//! ciphertext does not match.
//!
//! Serialized layouts (all coefficients little-endian `u16`):
//!
//! | object      | layout                                        |
//! |-------------|-----------------------------------------------|
//! | public key  | `params_id:4 LE` `rho:32` `b:n×2`             |
//! | secret key  | `params_id:4 LE` `s:n×2` `z:32` `public key`  |
//! | ciphertext  | `params_id:4 LE` `u:n×2` `v:n×2`              |
//!
//! Secret coefficients are stored reduced mod q.

use std::fmt;

use sha3::{Digest, Sha3_256};
use zeroize::{Zeroize, ZeroizeOnDrop};

use super::kdf::kdf;
use super::rng::SeedStream;
use super::CryptoError;

/// Identifier written in front of every serialized key and ciphertext.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamsId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LweParameters {
    id: ParamsId,
    n: usize,
    q: u32,
    eta: u32,
    msg_bits: usize,
    seed_len: usize,
    v_bits: Option<u32>,
}

const MAX_N: usize = 1024;
const MAX_Q: u32 = 1 << 15;
const MAX_ETA: u32 = 8;

fn is_prime(x: u32) -> bool {
    if x < 2 {
        return false;
    }
    (2..).take_while(|d| d * d <= x).all(|d| !x.is_multiple_of(d))
}

impl LweParameters {
    pub const SHIPPED_ID: ParamsId = ParamsId(0x0001_0100);
    pub const TOY_ID: ParamsId = ParamsId(0x0000_0004);

    /// n = 256, q = 3329, eta = 2, `v` compressed to 4 bits.
    pub fn shipped() -> Self {
        LweParameters {
            id: Self::SHIPPED_ID,
            n: 256,
            q: 3329,
            eta: 2,
            msg_bits: 256,
            seed_len: 32,
            v_bits: Some(4),
        }
    }

    /// n = 4, q = 17, eta = 1, uncompressed. Small enough to check by hand.
    pub fn toy() -> Self {
        LweParameters {
            id: Self::TOY_ID,
            n: 4,
            q: 17,
            eta: 1,
            msg_bits: 4,
            seed_len: 32,
            v_bits: None,
        }
    }

    pub fn custom(
        id: ParamsId,
        n: usize,
        q: u32,
        eta: u32,
        v_bits: Option<u32>,
    ) -> Result<Self, CryptoError> {
        if n == 0 || n > MAX_N {
            return Err(CryptoError::InvalidParameters("n must be in 1..=1024"));
        }
        if !(3..MAX_Q).contains(&q) || !is_prime(q) {
            return Err(CryptoError::InvalidParameters("q must be an odd prime below 2^15"));
        }
        if eta > MAX_ETA || 2 * eta >= q {
            return Err(CryptoError::InvalidParameters("eta too large"));
        }
        if let Some(d) = v_bits {
            if d == 0 || (1u32 << d) >= q {
                return Err(CryptoError::InvalidParameters("v_bits must satisfy 0 < 2^d < q"));
            }
        }
        Ok(LweParameters { id, n, q, eta, msg_bits: n, seed_len: 32, v_bits })
    }

    pub fn by_id(id: ParamsId) -> Option<Self> {
        match id {
            Self::SHIPPED_ID => Some(Self::shipped()),
            Self::TOY_ID => Some(Self::toy()),
            _ => None,
        }
    }

    pub fn id(&self) -> ParamsId {
        self.id
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn eta(&self) -> u32 {
        self.eta
    }
    pub fn msg_bits(&self) -> usize {
        self.msg_bits
    }
    pub fn msg_bytes(&self) -> usize {
        self.msg_bits.div_ceil(8)
    }
    pub fn seed_len(&self) -> usize {
        self.seed_len
    }
    pub fn v_bits(&self) -> Option<u32> {
        self.v_bits
    }

    fn check_seed(&self, seed: &[u8]) -> Result<(), CryptoError> {
        if seed.len() != self.seed_len {
            return Err(CryptoError::InvalidSeedLength {
                expected: self.seed_len,
                actual: seed.len(),
            });
        }
        Ok(())
    }

    pub fn public_key_len(&self) -> usize {
        4 + 32 + 2 * self.n
    }
    pub fn ciphertext_len(&self) -> usize {
        4 + 4 * self.n
    }
    pub fn secret_key_len(&self) -> usize {
        4 + 2 * self.n + 32 + self.public_key_len()
    }
}

// ---------------------------------------------------------------------------
// Polynomial arithmetic
// ---------------------------------------------------------------------------

fn reduce(x: i64, q: u32) -> u16 {
    x.rem_euclid(q as i64) as u16
}

/// Expands the public polynomial from `rho` by rejection sampling.
pub fn expand_a(params: &LweParameters, rho: &[u8; 32]) -> Vec<u16> {
    let mut stream = SeedStream::new("kem-matrix", &[&params.id.0.to_le_bytes(), rho]);
    let mask = (1u32 << (32 - (params.q - 1).leading_zeros())) - 1;
    let mut out = Vec::with_capacity(params.n);
    while out.len() < params.n {
        let x = u16::from_le_bytes(stream.array()) as u32 & mask;
        if x < params.q {
            out.push(x as u16);
        }
    }
    out
}

/// Centered binomial draw: sum of `eta` bits minus sum of `eta` bits.
pub fn sample_cbd(stream: &mut SeedStream, n: usize, eta: u32) -> Vec<i8> {
    (0..n)
        .map(|_| {
            let mut x = 0i8;
            for _ in 0..eta {
                x += stream.bit() as i8;
                x -= stream.bit() as i8;
            }
            x
        })
        .collect()
}

/// Negacyclic product of a public polynomial and a small one.
pub fn mul_small(params: &LweParameters, a: &[u16], small: &[i8]) -> Vec<u16> {
    let n = params.n;
    let mut acc = vec![0i32; 2 * n];
    for (j, &sj) in small.iter().enumerate() {
        if sj == 0 {
            continue;
        }
        let sj = sj as i32;
        for (slot, &ai) in acc[j..j + n].iter_mut().zip(a) {
            *slot += ai as i32 * sj;
        }
    }
    (0..n)
        .map(|k| reduce(acc[k] as i64 - acc[k + n] as i64, params.q))
        .collect()
}

fn add_small(params: &LweParameters, a: &mut [u16], small: &[i8]) {
    for (x, &e) in a.iter_mut().zip(small) {
        *x = reduce(*x as i64 + e as i64, params.q);
    }
}

fn compress(x: u16, d: u32, q: u32) -> u16 {
    // round(2^d * x / q) mod 2^d
    let num = ((x as u64) << d) + (q as u64 / 2);
    ((num / q as u64) as u32 & ((1 << d) - 1)) as u16
}

fn decompress(y: u16, d: u32, q: u32) -> u16 {
    // round(q * y / 2^d)
    (((y as u64 * q as u64) + (1 << (d - 1))) >> d) as u16
}

fn msg_bit(m: &[u8], i: usize) -> bool {
    (m[i / 8] >> (i % 8)) & 1 == 1
}

// ---------------------------------------------------------------------------
// Keys and ciphertexts
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq)]
pub struct KemPublicKey {
    params: LweParameters,
    rho: [u8; 32],
    a: Vec<u16>,
    b: Vec<u16>,
    digest: [u8; 32],
}

impl fmt::Debug for KemPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KemPublicKey")
            .field("params_id", &self.params.id)
            .field("digest", &hex::encode(&self.digest[..8]))
            .finish()
    }
}

impl KemPublicKey {
    fn new(params: LweParameters, rho: [u8; 32], b: Vec<u16>) -> Self {
        let a = expand_a(&params, &rho);
        let mut pk = KemPublicKey { params, rho, a, b, digest: [0; 32] };
        pk.digest = Sha3_256::digest(pk.to_bytes()).into();
        pk
    }

    pub fn params(&self) -> &LweParameters {
        &self.params
    }
    pub fn rho(&self) -> &[u8; 32] {
        &self.rho
    }
    /// The expanded public polynomial.
    pub fn a(&self) -> &[u16] {
        &self.a
    }
    pub fn b(&self) -> &[u16] {
        &self.b
    }
    /// SHA3-256 of the serialized key.
    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.params.public_key_len());
        out.extend_from_slice(&self.params.id.0.to_le_bytes());
        out.extend_from_slice(&self.rho);
        put_coeffs(&mut out, &self.b);
        out
    }

    pub fn from_bytes(params: &LweParameters, bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != params.public_key_len() {
            return Err(CryptoError::MalformedPublicKey("wrong length"));
        }
        check_id(params, bytes)?;
        let rho: [u8; 32] = bytes[4..36].try_into().expect("sliced 32");
        let b = get_coeffs(&bytes[36..], params.n);
        if b.iter().any(|&c| c as u32 >= params.q) {
            return Err(CryptoError::MalformedPublicKey("coefficient out of range"));
        }
        Ok(KemPublicKey::new(params.clone(), rho, b))
    }
}

#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct KemSecretKey {
    #[zeroize(skip)]
    params: LweParameters,
    s: Vec<i8>,
    z: [u8; 32],
    #[zeroize(skip)]
    public: KemPublicKey,
}

impl fmt::Debug for KemSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KemSecretKey").field("params_id", &self.params.id).finish_non_exhaustive()
    }
}

impl Eq for KemSecretKey {}

impl PartialEq for KemSecretKey {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.s == other.s && self.z == other.z && self.public == other.public
    }
}

impl KemSecretKey {
    pub fn params(&self) -> &LweParameters {
        &self.params
    }
    /// Secret coefficients, each in `[-eta, eta]`.
    pub fn s(&self) -> &[i8] {
        &self.s
    }
    pub fn public(&self) -> &KemPublicKey {
        &self.public
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.params.secret_key_len());
        out.extend_from_slice(&self.params.id.0.to_le_bytes());
        let s: Vec<u16> = self.s.iter().map(|&c| reduce(c as i64, self.params.q)).collect();
        put_coeffs(&mut out, &s);
        out.extend_from_slice(&self.z);
        out.extend_from_slice(&self.public.to_bytes());
        out
    }

    pub fn from_bytes(params: &LweParameters, bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != params.secret_key_len() {
            return Err(CryptoError::MalformedEncoding("secret key length"));
        }
        check_id(params, bytes)?;
        let n = params.n;
        let q = params.q as i32;
        let eta = params.eta as i32;
        let mut s = Vec::with_capacity(n);
        for c in get_coeffs(&bytes[4..4 + 2 * n], n) {
            let c = c as i32;
            let centered = if c > q / 2 { c - q } else { c };
            if centered.abs() > eta {
                return Err(CryptoError::MalformedEncoding("secret coefficient out of range"));
            }
            s.push(centered as i8);
        }
        let off = 4 + 2 * n;
        let z: [u8; 32] = bytes[off..off + 32].try_into().expect("sliced 32");
        let public = KemPublicKey::from_bytes(params, &bytes[off + 32..])?;
        Ok(KemSecretKey { params: params.clone(), s, z, public })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemKeyPair {
    pub public_key: KemPublicKey,
    pub secret_key: KemSecretKey,
}

impl KemKeyPair {
    pub fn params(&self) -> &LweParameters {
        &self.public_key.params
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemCiphertext {
    params_id: ParamsId,
    u: Vec<u16>,
    v: Vec<u16>,
}

impl KemCiphertext {
    /// Builds a ciphertext, checking `u < q` and `v` inside its (possibly
    /// compressed) range.
    pub fn from_parts(params: &LweParameters, u: Vec<u16>, v: Vec<u16>) -> Result<Self, CryptoError> {
        if u.len() != params.n || v.len() != params.n {
            return Err(CryptoError::MalformedEncoding("ciphertext length"));
        }
        let v_bound = params.v_bits.map_or(params.q, |d| 1 << d);
        if u.iter().any(|&c| c as u32 >= params.q) || v.iter().any(|&c| c as u32 >= v_bound) {
            return Err(CryptoError::MalformedEncoding("ciphertext coefficient out of range"));
        }
        Ok(KemCiphertext { params_id: params.id, u, v })
    }

    pub fn params_id(&self) -> ParamsId {
        self.params_id
    }
    pub fn u(&self) -> &[u16] {
        &self.u
    }
    pub fn v(&self) -> &[u16] {
        &self.v
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.u.len());
        out.extend_from_slice(&self.params_id.0.to_le_bytes());
        put_coeffs(&mut out, &self.u);
        put_coeffs(&mut out, &self.v);
        out
    }

    pub fn from_bytes(params: &LweParameters, bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != params.ciphertext_len() {
            return Err(CryptoError::MalformedEncoding("ciphertext length"));
        }
        check_id(params, bytes)?;
        let n = params.n;
        let u = get_coeffs(&bytes[4..4 + 2 * n], n);
        let v = get_coeffs(&bytes[4 + 2 * n..], n);
        Self::from_parts(params, u, v)
    }
}

/// 32-byte KEM output. Only ever produced by the KDF.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SharedSecret([u8; 32]);

impl SharedSecret {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SharedSecret(..)")
    }
}

fn put_coeffs(out: &mut Vec<u8>, coeffs: &[u16]) {
    for c in coeffs {
        out.extend_from_slice(&c.to_le_bytes());
    }
}

fn get_coeffs(bytes: &[u8], n: usize) -> Vec<u16> {
    bytes.chunks_exact(2).take(n).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
}

fn check_id(params: &LweParameters, bytes: &[u8]) -> Result<(), CryptoError> {
    let id = u32::from_le_bytes(bytes[..4].try_into().expect("sliced 4"));
    if id != params.id.0 {
        return Err(CryptoError::ParamsMismatch { expected: params.id.0, actual: id });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// The random material a keypair is built from.
pub struct KeygenMaterial {
    pub rho: [u8; 32],
    pub s: Vec<i8>,
    pub e: Vec<i8>,
    pub z: [u8; 32],
}

pub fn keygen_material(params: &LweParameters, seed: &[u8]) -> Result<KeygenMaterial, CryptoError> {
    params.check_seed(seed)?;
    let mut stream = SeedStream::new("kem-keygen", &[&params.id.0.to_le_bytes(), seed]);
    let rho = stream.array();
    let z = stream.array();
    let s = sample_cbd(&mut stream, params.n, params.eta);
    let e = sample_cbd(&mut stream, params.n, params.eta);
    Ok(KeygenMaterial { rho, s, e, z })
}

pub fn keygen(params: &LweParameters, seed: &[u8]) -> Result<KemKeyPair, CryptoError> {
    let KeygenMaterial { rho, s, e, z } = keygen_material(params, seed)?;
    let a = expand_a(params, &rho);
    let mut b = mul_small(params, &a, &s);
    add_small(params, &mut b, &e);
    let public_key = KemPublicKey::new(params.clone(), rho, b);
    let secret_key = KemSecretKey { params: params.clone(), s, z, public: public_key.clone() };
    Ok(KemKeyPair { public_key, secret_key })
}

/// Noise used by one encryption.
pub struct EncryptionCoins {
    pub r: Vec<i8>,
    pub e1: Vec<i8>,
    pub e2: Vec<i8>,
}

/// Coins are a function of the public key and message only, which is what
/// lets decapsulation re-encrypt and compare.
pub fn encryption_coins(pk: &KemPublicKey, msg: &[u8]) -> EncryptionCoins {
    let p = &pk.params;
    let mut stream = SeedStream::new("kem-coins", &[&p.id.0.to_le_bytes(), &pk.digest, msg]);
    EncryptionCoins {
        r: sample_cbd(&mut stream, p.n, p.eta),
        e1: sample_cbd(&mut stream, p.n, p.eta),
        e2: sample_cbd(&mut stream, p.n, p.eta),
    }
}

/// Deterministic CPA encryption of `msg` (little-endian bit order) under
/// explicit coins.
pub fn encrypt_with_coins(pk: &KemPublicKey, msg: &[u8], coins: &EncryptionCoins) -> KemCiphertext {
    let p = &pk.params;
    let mut u = mul_small(p, &pk.a, &coins.r);
    add_small(p, &mut u, &coins.e1);
    let mut v = mul_small(p, &pk.b, &coins.r);
    add_small(p, &mut v, &coins.e2);
    let half = (p.q as u16).div_ceil(2);
    for (i, x) in v.iter_mut().enumerate() {
        if msg_bit(msg, i) {
            *x = reduce(*x as i64 + half as i64, p.q);
        }
    }
    if let Some(d) = p.v_bits {
        for x in v.iter_mut() {
            *x = compress(*x, d, p.q);
        }
    }
    KemCiphertext { params_id: p.id, u, v }
}

/// Recovers the encrypted message bits.
pub fn decrypt(sk: &KemSecretKey, ct: &KemCiphertext) -> Vec<u8> {
    let p = &sk.params;
    let us = mul_small(p, &ct.u, &sk.s);
    let mut msg = vec![0u8; p.msg_bytes()];
    for i in 0..p.n {
        let v = match p.v_bits {
            Some(d) => decompress(ct.v[i], d, p.q),
            None => ct.v[i],
        };
        let w = reduce(v as i64 - us[i] as i64, p.q);
        if compress(w, 1, p.q) == 1 {
            msg[i / 8] |= 1 << (i % 8);
        }
    }
    msg
}

fn message_from_seed(p: &LweParameters, seed: &[u8]) -> Vec<u8> {
    let mut stream = SeedStream::new("kem-message", &[&p.id.0.to_le_bytes(), seed]);
    let mut m = vec![0u8; p.msg_bytes()];
    stream.fill(&mut m);
    if !p.msg_bits.is_multiple_of(8) {
        let last = m.len() - 1;
        m[last] &= (1u8 << (p.msg_bits % 8)) - 1;
    }
    m
}

fn shared_from(label: &str, key: &[u8], ct: &KemCiphertext) -> SharedSecret {
    let ct_hash: [u8; 32] = Sha3_256::digest(ct.to_bytes()).into();
    SharedSecret(*kdf(label, &[key, &ct_hash]).as_bytes())
}

pub fn encapsulate(pk: &KemPublicKey, seed: &[u8]) -> Result<(KemCiphertext, SharedSecret), CryptoError> {
    let p = &pk.params;
    p.check_seed(seed)?;
    if pk.b.len() != p.n || pk.b.iter().any(|&c| c as u32 >= p.q) {
        return Err(CryptoError::MalformedPublicKey("b out of range"));
    }
    let m = message_from_seed(p, seed);
    let coins = encryption_coins(pk, &m);
    let ct = encrypt_with_coins(pk, &m, &coins);
    let ss = shared_from("kem-shared", &m, &ct);
    Ok((ct, ss))
}

/// Never fails on a well-typed ciphertext: a ciphertext that does not
/// re-encrypt to itself yields a secret derived from the rejection key.
pub fn decapsulate(sk: &KemSecretKey, ct: &KemCiphertext) -> Result<SharedSecret, CryptoError> {
    if ct.params_id != sk.params.id {
        return Err(CryptoError::ParamsMismatch { expected: sk.params.id.0, actual: ct.params_id.0 });
    }
    let m = decrypt(sk, ct);
    let coins = encryption_coins(&sk.public, &m);
    let again = encrypt_with_coins(&sk.public, &m, &coins);
    if again == *ct {
        Ok(shared_from("kem-shared", &m, ct))
    } else {
        Ok(shared_from("kem-reject", &sk.z, ct))
    }
}
