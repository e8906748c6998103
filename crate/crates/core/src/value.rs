//! Fixed-width byte-string values.
//!
//! Every protocol symbol (identities, passwords, server ids, centre secrets,
//! nonces and derived tokens) is a [`Value`] of exactly `W` bytes, so any two
//! symbols can be XORed. Concatenation produces a [`ByteString`] that is only
//! ever consumed by the hash.

use std::fmt;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default value width in bytes.
pub const DEFAULT_WIDTH: usize = 32;

/// Smallest width accepted by configuration.
pub const MIN_WIDTH: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValueError {
    #[error("atom label is {len} bytes, exceeds width {width}")]
    AtomTooLong { len: usize, width: usize },
    #[error("cannot concatenate an empty list of values")]
    EmptyConcat,
    #[error("width {0} is below the minimum of {MIN_WIDTH} bytes")]
    WidthTooSmall(usize),
    #[error("expected {expected} bytes, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// A fixed-width opaque byte string.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(Box<[u8]>);

impl Value {
    /// The all-zero value of the given width.
    pub fn zero(width: usize) -> Self {
        Value(vec![0u8; width].into_boxed_slice())
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Value(bytes.into_boxed_slice())
    }

    pub fn from_hex(s: &str) -> Result<Self, ValueError> {
        hex::decode(s)
            .map(Value::from_bytes)
            .map_err(|e| ValueError::Hex(e.to_string()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    /// Bytewise exclusive-or.
    ///
    /// Both operands come from the same [`ValueSpace`], so widths agree; a
    /// mismatch is a programming error.
    pub fn xor(&self, other: &Value) -> Value {
        assert_eq!(self.width(), other.width(), "xor of values with different widths");
        Value(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a ^ b)
                .collect(),
        )
    }

    /// Big-endian increment modulo `2^(8W)`.
    pub fn add_one(&self) -> Value {
        let mut bytes = self.0.clone();
        for b in bytes.iter_mut().rev() {
            let (next, carry) = b.overflowing_add(1);
            *b = next;
            if !carry {
                break;
            }
        }
        Value(bytes)
    }

    /// Returns a copy with bit `bit` (counted from the most significant bit
    /// of byte 0) inverted.
    pub fn flip_bit(&self, bit: usize) -> Value {
        let mut bytes = self.0.clone();
        bytes[bit / 8] ^= 0x80 >> (bit % 8);
        Value(bytes)
    }
}

impl std::ops::BitXor for &Value {
    type Output = Value;

    fn bitxor(self, rhs: &Value) -> Value {
        self.xor(rhs)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Value({})", self.to_hex())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Value::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Concatenation of one or more values; input to the hash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ByteString(Vec<u8>);

impl ByteString {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Concatenates `parts` in order. No length prefixes are added; every part
/// has the same fixed width.
pub fn concat<'a, I>(parts: I) -> Result<ByteString, ValueError>
where
    I: IntoIterator<Item = &'a Value>,
{
    let mut out = Vec::new();
    let mut count = 0usize;
    for part in parts {
        out.extend_from_slice(part.as_bytes());
        count += 1;
    }
    if count == 0 {
        return Err(ValueError::EmptyConcat);
    }
    Ok(ByteString(out))
}

/// The configured one-way function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HashFunction {
    /// SHA-256, truncated or counter-extended to the configured width.
    Std256,
    /// A fast deterministic 64-bit-lane mixing function. Not cryptographic.
    Toy,
}

impl HashFunction {
    pub fn name(self) -> &'static str {
        match self {
            HashFunction::Std256 => "std256",
            HashFunction::Toy => "toy",
        }
    }

    /// Digest of `input`, exactly `width` bytes.
    pub fn digest(self, input: &[u8], width: usize) -> Vec<u8> {
        match self {
            HashFunction::Std256 => sha256_expand(input, width),
            HashFunction::Toy => toy_digest(input, width),
        }
    }
}

impl std::str::FromStr for HashFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "std256" => Ok(HashFunction::Std256),
            "toy" => Ok(HashFunction::Toy),
            other => Err(format!("unknown hash function `{other}`")),
        }
    }
}

// Block 0 is plain SHA-256 of the input; block k > 0 is SHA-256 of
// input || be32(k).
fn sha256_expand(input: &[u8], width: usize) -> Vec<u8> {
    let mut out = Sha256::digest(input).to_vec();
    let mut block = 1u32;
    while out.len() < width {
        let mut hasher = Sha256::new();
        hasher.update(input);
        hasher.update(block.to_be_bytes());
        out.extend_from_slice(&hasher.finalize());
        block += 1;
    }
    out.truncate(width);
    out
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn toy_digest(input: &[u8], width: usize) -> Vec<u8> {
    let lanes = width.div_ceil(8);
    let mut out = Vec::with_capacity(lanes * 8);
    for lane in 0..lanes as u64 {
        let mut acc = 0x243F_6A88_85A3_08D3u64
            ^ lane.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ input.len() as u64;
        for chunk in input.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            acc = mix64(acc ^ u64::from_le_bytes(word));
        }
        acc = mix64(acc ^ lane);
        out.extend_from_slice(&acc.to_be_bytes());
    }
    out.truncate(width);
    out
}

/// Width and hash shared by every value in one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueSpace {
    pub width: usize,
    pub hash: HashFunction,
}

impl Default for ValueSpace {
    fn default() -> Self {
        ValueSpace {
            width: DEFAULT_WIDTH,
            hash: HashFunction::Std256,
        }
    }
}

impl ValueSpace {
    pub fn new(width: usize, hash: HashFunction) -> Result<Self, ValueError> {
        if width < MIN_WIDTH {
            return Err(ValueError::WidthTooSmall(width));
        }
        Ok(ValueSpace { width, hash })
    }

    pub fn zero(&self) -> Value {
        Value::zero(self.width)
    }

    /// Embeds a text label: its UTF-8 bytes left-padded with zeros to `W`.
    pub fn encode_atom(&self, label: &str) -> Result<Value, ValueError> {
        let bytes = label.as_bytes();
        if bytes.len() > self.width {
            return Err(ValueError::AtomTooLong {
                len: bytes.len(),
                width: self.width,
            });
        }
        let mut out = vec![0u8; self.width];
        out[self.width - bytes.len()..].copy_from_slice(bytes);
        Ok(Value::from_bytes(out))
    }

    /// Parses a hex string, checking its width.
    pub fn value_from_hex(&self, s: &str) -> Result<Value, ValueError> {
        let v = Value::from_hex(s)?;
        if v.width() != self.width {
            return Err(ValueError::BadLength {
                expected: self.width,
                actual: v.width(),
            });
        }
        Ok(v)
    }

    /// Digest of arbitrary bytes.
    pub fn hash_bytes(&self, input: &[u8]) -> Value {
        Value::from_bytes(self.hash.digest(input, self.width))
    }

    /// `h(parts[0] || parts[1] || ...)`.
    pub fn h(&self, parts: &[&Value]) -> Value {
        let bytes = concat(parts.iter().copied()).expect("h() needs at least one part");
        self.hash_bytes(bytes.as_bytes())
    }
}

/// Deterministic seeded nonce source.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    counter: u64,
    inner: ChaCha20Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            counter: 0,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of values drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_nonce(&mut self, width: usize) -> Value {
        let mut bytes = vec![0u8; width];
        self.inner.fill_bytes(&mut bytes);
        self.counter += 1;
        Value::from_bytes(bytes)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.inner.next_u64()
    }
}

/// One entry of the golden-vector file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenVector {
    pub hash: HashFunction,
    pub width: usize,
    #[serde(rename = "input-hex")]
    pub input_hex: String,
    #[serde(rename = "digest-hex")]
    pub digest_hex: String,
}

impl GoldenVector {
    /// Recomputes the digest with this crate's implementation.
    pub fn check(&self) -> Result<bool, ValueError> {
        let input = hex::decode(&self.input_hex).map_err(|e| ValueError::Hex(e.to_string()))?;
        let got = hex::encode(self.hash.digest(&input, self.width));
        Ok(got == self.digest_hex)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> ValueSpace {
        ValueSpace::default()
    }

    #[test]
    fn encode_empty_label_is_zero() {
        assert_eq!(space().encode_atom("").unwrap(), space().zero());
    }

    #[test]
    fn encode_pads_on_the_left() {
        let v = space().encode_atom("S1").unwrap();
        assert_eq!(&v.as_bytes()[..30], &[0u8; 30]);
        assert_eq!(&v.as_bytes()[30..], b"S1");
    }

    #[test]
    fn encode_rejects_long_labels() {
        let label = "x".repeat(33);
        assert_eq!(
            space().encode_atom(&label),
            Err(ValueError::AtomTooLong { len: 33, width: 32 })
        );
        assert!(space().encode_atom(&"x".repeat(32)).is_ok());
    }

    #[test]
    fn xor_laws() {
        let mut rng = Rng::new(1);
        let a = rng.next_nonce(32);
        let b = rng.next_nonce(32);
        assert!(a.xor(&a).is_zero());
        assert_eq!(a.xor(&space().zero()), a);
        assert_eq!(a.xor(&b).xor(&b), a);
    }

    #[test]
    fn concat_lengths_and_order() {
        let s = space();
        let a = s.encode_atom("a").unwrap();
        let b = s.encode_atom("b").unwrap();
        assert_eq!(concat([&a]).unwrap().as_bytes(), a.as_bytes());
        assert_eq!(concat([&a, &b]).unwrap().len(), 64);
        assert_ne!(concat([&a, &b]).unwrap(), concat([&b, &a]).unwrap());
        assert_eq!(concat(std::iter::empty()), Err(ValueError::EmptyConcat));
    }

    #[test]
    fn add_one_cases() {
        let s = space();
        let one = s.zero().add_one();
        assert_eq!(one.as_bytes()[31], 1);
        assert!(one.as_bytes()[..31].iter().all(|&b| b == 0));

        let ff = Value::from_bytes(vec![0xFF; 32]);
        assert!(ff.add_one().is_zero());

        let mut bytes = vec![0u8; 32];
        bytes[31] = 0xFF;
        let v = Value::from_bytes(bytes).add_one();
        assert_eq!(&v.as_bytes()[30..], &[0x01, 0x00]);
    }

    #[test]
    fn hash_is_width_preserving() {
        for hash in [HashFunction::Std256, HashFunction::Toy] {
            for width in [16, 24, 32, 48, 64] {
                let s = ValueSpace::new(width, hash).unwrap();
                for k in 1..=6 {
                    let parts: Vec<Value> = (0..k).map(|i| s.encode_atom(&i.to_string()).unwrap()).collect();
                    let refs: Vec<&Value> = parts.iter().collect();
                    assert_eq!(s.h(&refs).width(), width);
                    assert_eq!(s.h(&refs), s.h(&refs));
                }
            }
        }
    }

    #[test]
    fn std256_at_32_is_plain_sha256() {
        let d = HashFunction::Std256.digest(b"abc", 32);
        assert_eq!(
            hex::encode(d),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn width_below_minimum_rejected() {
        assert_eq!(
            ValueSpace::new(15, HashFunction::Toy),
            Err(ValueError::WidthTooSmall(15))
        );
    }

    #[test]
    fn rng_counter_advances() {
        let mut rng = Rng::new(7);
        rng.next_nonce(32);
        rng.next_nonce(32);
        assert_eq!(rng.counter(), 2);
        assert_eq!(rng.seed(), 7);
    }

    #[test]
    fn flip_bit_changes_one_bit() {
        let z = space().zero();
        let f = z.flip_bit(9);
        assert_eq!(f.as_bytes()[1], 0x40);
        assert_eq!(f.flip_bit(9), z);
    }
}
