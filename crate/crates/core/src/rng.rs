//! Labelled, independent random streams derived from a single 64-bit seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Named sub-streams. Each label selects a distinct ChaCha stream under the same key,
/// so draws on one stream never shift another.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    AliceBits = 1,
    AliceBases = 2,
    BobBases = 3,
    BobOutcomes = 4,
    TestSet = 5,
    CascadePermutation = 6,
    VerifyHash = 7,
    Amplification = 8,
    ModelInit = 9,
    Shuffle = 10,
    Dataset = 11,
    Channel = 12,
    Synthetic = 13,
}

pub fn stream(seed: u64, label: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(label as u64);
    rng
}

/// Like [`stream`] with an extra index folded into the stream id, for per-pass or per-record streams.
pub fn indexed_stream(seed: u64, label: Stream, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((label as u64) << 48) ^ index.wrapping_add(1));
    rng
}

/// SplitMix64 finaliser; derives well-spread child seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
