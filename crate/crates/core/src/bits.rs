//! Bit strings stored one bit per byte, with a packed (MSB-first) wire form.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A string of bits. Each element is 0 or 1.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new() -> Self {
        BitString(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        BitString(vec![0; len])
    }

    pub fn with_capacity(cap: usize) -> Self {
        BitString(Vec::with_capacity(cap))
    }

    /// Builds a bit string from a slice of 0/1 values. Any non-zero byte is read as 1.
    pub fn from_bits(bits: &[u8]) -> Self {
        BitString(bits.iter().map(|&b| (b != 0) as u8).collect())
    }

    /// Parses a string such as `"1011"`.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::malformed("bit string", format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(BitString)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, bit: u8) {
        self.0.push(bit & 1);
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, bit: u8) {
        self.0[i] = bit & 1;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    /// Number of positions where `self` and `other` differ.
    pub fn hamming(&self, other: &BitString) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { left: self.len(), right: other.len() });
        }
        Ok(self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count())
    }

    /// Packs eight bits per byte, most significant bit first; the last byte is zero padded.
    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.len().div_ceil(8)];
        for (i, &b) in self.0.iter().enumerate() {
            out[i / 8] |= b << (7 - (i % 8));
        }
        out
    }

    /// Inverse of [`BitString::to_packed`]. Padding bits must be zero.
    pub fn from_packed(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::malformed(
                "packed bits",
                format!("{} bytes cannot hold exactly {len} bits", bytes.len()),
            ));
        }
        if !len.is_multiple_of(8) {
            let pad_mask = 0xffu8 >> (len % 8);
            if bytes[bytes.len() - 1] & pad_mask != 0 {
                return Err(Error::malformed("packed bits", "non-zero padding bits"));
            }
        }
        let bits = (0..len).map(|i| (bytes[i / 8] >> (7 - (i % 8))) & 1).collect();
        Ok(BitString(bits))
    }

    /// Packs into little-endian-indexed 64-bit words: bit `i` lives in word `i / 64` at position `i % 64`.
    pub fn to_words(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.len().div_ceil(64)];
        for (i, &b) in self.0.iter().enumerate() {
            out[i / 64] |= (b as u64) << (i % 64);
        }
        out
    }

    pub fn to_base64(&self) -> String {
        STANDARD.encode(self.to_packed())
    }

    pub fn from_base64(encoded: &str, len: usize) -> Result<Self> {
        let bytes = STANDARD
            .decode(encoded.as_bytes())
            .map_err(|e| Error::malformed("base64 bits", e.to_string()))?;
        Self::from_packed(&bytes, len)
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::fmt::Debug for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const SHOWN: usize = 64;
        let head: String = self.0.iter().take(SHOWN).map(|&b| if b == 1 { '1' } else { '0' }).collect();
        let ellipsis = if self.len() > SHOWN { "..." } else { "" };
        write!(f, "BitString[{}]({head}{ellipsis})", self.len())
    }
}

impl FromIterator<u8> for BitString {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        BitString(iter.into_iter().map(|b| b & 1).collect())
    }
}

impl std::ops::Index<usize> for BitString {
    type Output = u8;
    fn index(&self, i: usize) -> &u8 {
        &self.0[i]
    }
}

/// Wire form used inside JSON documents: bit length plus base64 of the packed bits.
#[derive(Serialize, Deserialize)]
struct PackedBits {
    len: usize,
    base64: String,
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PackedBits { len: self.len(), base64: self.to_base64() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let packed = PackedBits::deserialize(deserializer)?;
        BitString::from_base64(&packed.base64, packed.len).map_err(serde::de::Error::custom)
    }
}
