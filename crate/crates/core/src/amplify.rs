//! Key verification and privacy amplification.
//!
//! Verification evaluates the key as a polynomial over GF(2^64) at a seeded point
//! (Horner form, length appended, seeded offset added). Two distinct keys of L words
//! collide with probability at most (L + 1) / 2^64.
//!
//! Amplification multiplies the key, read as a GF(2) column vector, by a seeded
//! l x n Toeplitz matrix. The family is two-universal.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

pub const DEFAULT_SECURITY_MARGIN: f64 = 64.0;

/// Reduction polynomial x^64 + x^4 + x^3 + x + 1 (low terms).
const GF64_POLY: u64 = 0x1B;

fn clmul(a: u64, b: u64) -> u128 {
    let mut acc = 0u128;
    let a = a as u128;
    let mut b = b;
    let mut shift = 0;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a << shift;
        }
        b >>= 1;
        shift += 1;
    }
    acc
}

pub(crate) fn gf64_mul(a: u64, b: u64) -> u64 {
    let mut r = clmul(a, b);
    for _ in 0..2 {
        let hi = (r >> 64) as u64;
        r = (r as u64 as u128) ^ clmul(hi, GF64_POLY);
    }
    r as u64
}

/// Seeded 64-bit universal hash of a bit string.
pub fn universal_hash(key: &BitString, hash_seed: u64) -> u64 {
    let mut rng = stream(hash_seed, Stream::VerifyHash);
    let point = rng.next_u64() | 1;
    let offset = rng.next_u64();
    let mut acc = 0u64;
    for w in key.to_words() {
        acc = gf64_mul(acc ^ w, point);
    }
    acc = gf64_mul(acc ^ key.len() as u64, point);
    acc ^ offset
}

/// Compares seeded hashes of both keys.
pub fn verify_keys(key_a: &BitString, key_b: &BitString, hash_seed: u64) -> Result<bool> {
    if key_a.len() != key_b.len() {
        return Err(Error::LengthMismatch { left: key_a.len(), right: key_b.len() });
    }
    Ok(universal_hash(key_a, hash_seed) == universal_hash(key_b, hash_seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationPlan {
    pub input_len: usize,
    /// Disclosed bits: Cascade in both directions plus the test bits.
    pub leak_total: u64,
    /// Secret bits per reconciled bit before subtracting the leak.
    pub entropy_rate: f64,
    pub security_margin: f64,
    pub output_len: usize,
}

impl AmplificationPlan {
    /// l = max(0, floor(n * entropy_rate - leak_total - t)), capped at n.
    pub fn new(input_len: usize, leak_total: u64, entropy_rate: f64, security_margin: f64) -> Result<Self> {
        if !entropy_rate.is_finite() || entropy_rate < 0.0 {
            return Err(Error::param("entropy_rate", format!("{entropy_rate} must be finite and non-negative")));
        }
        if !security_margin.is_finite() || security_margin < 0.0 {
            return Err(Error::param("security_margin", format!("{security_margin} must be finite and non-negative")));
        }
        let raw = (input_len as f64 * entropy_rate - leak_total as f64 - security_margin).floor();
        let output_len = if raw <= 0.0 { 0 } else { (raw as usize).min(input_len) };
        Ok(AmplificationPlan { input_len, leak_total, entropy_rate, security_margin, output_len })
    }
}

/// Bit window s[start .. start + 64] of a packed little-endian bit vector.
fn window(words: &[u64], start: usize) -> u64 {
    let (w, off) = (start / 64, start % 64);
    let lo = words.get(w).copied().unwrap_or(0) >> off;
    if off == 0 {
        lo
    } else {
        lo | (words.get(w + 1).copied().unwrap_or(0) << (64 - off))
    }
}

/// Toeplitz seed bits s_0 .. s_{n+l-2}, packed.
fn toeplitz_seed(n: usize, l: usize, seed: u64) -> Vec<u64> {
    let bits = n + l - 1;
    let mut rng = stream(seed, Stream::Amplification);
    let mut words: Vec<u64> = (0..bits.div_ceil(64)).map(|_| rng.next_u64()).collect();
    if !bits.is_multiple_of(64) {
        let last = words.len() - 1;
        words[last] &= (1u64 << (bits % 64)) - 1;
    }
    words
}

/// K = T x with T[i][j] = s[i - j + n - 1].
pub fn privacy_amplify(key: &BitString, plan: &AmplificationPlan, seed: u64) -> Result<BitString> {
    let n = key.len();
    let l = plan.output_len;
    if l > n {
        return Err(Error::param("output_len", format!("{l} exceeds key length {n}")));
    }
    if plan.input_len != n {
        return Err(Error::LengthMismatch { left: plan.input_len, right: n });
    }
    if l == 0 {
        return Ok(BitString::new());
    }
    let s = toeplitz_seed(n, l, seed);
    // Reversed key: row i of T x is parity(s[i .. i + n] & reversed).
    let reversed: BitString = (0..n).map(|j| key[n - 1 - j]).collect();
    let y = reversed.to_words();
    let out = (0..l)
        .map(|i| {
            let acc = y.iter().enumerate().fold(0u64, |acc, (w, &yw)| acc ^ (window(&s, i + 64 * w) & yw));
            (acc.count_ones() & 1) as u8
        })
        .collect();
    Ok(out)
}

/// Metadata written next to a final key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalKeySidecar {
    pub input_len: usize,
    pub leak_total: u64,
    pub leak_ab_bits: u64,
    pub leak_ba_bits: u64,
    pub test_bits: usize,
    pub entropy_rate: f64,
    pub security_margin: f64,
    pub output_len: usize,
    pub hash_seed: u64,
    pub amplification_seed: u64,
    pub verified: bool,
}

impl FinalKeySidecar {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: FinalKeySidecar = serde_json::from_str(text)?;
        if s.output_len > s.input_len {
            return Err(Error::malformed("final key sidecar", "output longer than input"));
        }
        let sum = s.leak_ab_bits.checked_add(s.leak_ba_bits).and_then(|v| v.checked_add(s.test_bits as u64));
        if sum != Some(s.leak_total) {
            return Err(Error::malformed("final key sidecar", "leak components do not add up"));
        }
        Ok(s)
    }
}
