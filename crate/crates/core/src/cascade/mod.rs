//! Cascade reconciliation.
//!
//! Pass 1 cuts the key into consecutive blocks of size k1. Later passes assign bits to
//! blocks through a seeded uniform permutation and double the block size. Every block
//! parity Alice discloses is answered by Bob's parity for the same block. An odd
//! mismatch triggers BINARY, and each correction re-opens every earlier block that
//! contains the flipped position; those are drained smallest-first until all known
//! blocks agree in parity.

mod transcript;

pub use transcript::{
    parse_ndjson, recount, CascadeTranscript, Correction, Direction, Message, MessageKind, PassInfo,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::keyrate::binary_entropy;
use crate::rng::{indexed_stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSizeRule {
    /// k1 = ceil(coefficient / max(qber_est, 1/n)).
    Auto { coefficient: f64 },
    Fixed(usize),
}

impl Default for BlockSizeRule {
    fn default() -> Self {
        BlockSizeRule::Auto { coefficient: 0.73 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub n_passes: u32,
    pub k1_rule: BlockSizeRule,
    pub growth: usize,
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig { n_passes: 4, k1_rule: BlockSizeRule::default(), growth: 2, seed: 0 }
    }
}

impl CascadeConfig {
    pub fn with_seed(seed: u64) -> Self {
        CascadeConfig { seed, ..Self::default() }
    }

    /// First-pass block size for a key of length n, clamped to [2, n/2].
    pub fn first_block_size(&self, qber_est: f64, n: usize) -> usize {
        let upper = (n / 2).max(2);
        let k = match self.k1_rule {
            BlockSizeRule::Fixed(k) => k,
            BlockSizeRule::Auto { coefficient } => {
                let e = qber_est.max(1.0 / n as f64);
                (coefficient / e).ceil() as usize
            }
        };
        k.clamp(2, upper)
    }

    /// Block size of every pass. Later passes are capped at n.
    pub fn block_sizes(&self, qber_est: f64, n: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.n_passes as usize);
        let mut k = self.first_block_size(qber_est, n);
        for _ in 0..self.n_passes {
            sizes.push(k);
            k = k.saturating_mul(self.growth).min(n.max(2));
        }
        sizes
    }

    fn validate(&self) -> Result<()> {
        if self.n_passes == 0 {
            return Err(Error::param("n_passes", "at least one pass is required"));
        }
        if self.growth == 0 {
            return Err(Error::param("growth", "must be positive"));
        }
        if let BlockSizeRule::Auto { coefficient } = self.k1_rule {
            if !(coefficient > 0.0) {
                return Err(Error::param("k1_rule", "coefficient must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconciliationResult {
    pub corrected_bob_key: BitString,
    pub transcript: CascadeTranscript,
    /// leak_ab_bits / (n h(e_true)); `None` when the keys were identical.
    pub measured_f: Option<f64>,
}

fn parity_of(positions: &[usize], bits: &[u8]) -> u8 {
    positions.iter().fold(0u8, |acc, &i| acc ^ bits[i])
}

fn ceil_log2(k: usize) -> u32 {
    if k <= 1 { 0 } else { usize::BITS - (k - 1).leading_zeros() }
}

/// BINARY on a block given by `positions`: returns the index (into `positions`) of one
/// bit where Alice and Bob differ. Appends one Alice parity and one Bob reply per halving.
fn locate(
    positions: &[usize],
    alice: &[u8],
    bob: &[u8],
    transcript: &mut CascadeTranscript,
    pass: u32,
    block: u64,
) -> Result<usize> {
    if positions.is_empty() || parity_of(positions, alice) == parity_of(positions, bob) {
        return Err(Error::EvenParity);
    }
    let (mut lo, mut hi) = (0usize, positions.len());
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let first = &positions[lo..mid];
        let pa = parity_of(first, alice);
        let pb = parity_of(first, bob);
        transcript.record(Direction::AliceToBob, MessageKind::BinaryParity, pass, block, 1, pa as u64);
        let first_wrong = pa != pb;
        transcript.record(Direction::BobToAlice, MessageKind::BinaryReply, pass, block, 1, (!first_wrong) as u64);
        if first_wrong {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// BINARY on two equal-length blocks with an odd number of differences.
pub fn binary_locate(alice_block: &BitString, bob_block: &BitString, transcript: &mut CascadeTranscript) -> Result<usize> {
    if alice_block.len() != bob_block.len() {
        return Err(Error::LengthMismatch { left: alice_block.len(), right: bob_block.len() });
    }
    let positions: Vec<usize> = (0..alice_block.len()).collect();
    locate(&positions, alice_block.as_slice(), bob_block.as_slice(), transcript, 0, 0)
}

/// Block layout of one pass.
struct Pass {
    /// Bit positions in block order; block j is `order[offsets[j]..offsets[j + 1]]`.
    order: Vec<usize>,
    offsets: Vec<usize>,
    block_of: Vec<u32>,
    alice_parity: Vec<u8>,
    bob_parity: Vec<u8>,
}

impl Pass {
    fn new(order: Vec<usize>, k: usize) -> Self {
        let n = order.len();
        let n_blocks = n.div_ceil(k);
        let offsets: Vec<usize> = (0..=n_blocks).map(|j| (j * k).min(n)).collect();
        let mut block_of = vec![0u32; n];
        for j in 0..n_blocks {
            for &pos in &order[offsets[j]..offsets[j + 1]] {
                block_of[pos] = j as u32;
            }
        }
        Pass { order, offsets, block_of, alice_parity: Vec::new(), bob_parity: Vec::new() }
    }

    fn n_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    fn block(&self, j: usize) -> &[usize] {
        &self.order[self.offsets[j]..self.offsets[j + 1]]
    }

    fn mismatched(&self, j: usize) -> bool {
        self.alice_parity[j] != self.bob_parity[j]
    }
}

pub fn run_cascade(alice_key: &BitString, bob_key: &BitString, qber_est: f64, config: &CascadeConfig) -> Result<ReconciliationResult> {
    run_cascade_with(alice_key, bob_key, qber_est, config, CascadeTranscript::new())
}

/// Same as [`run_cascade`], recording into a caller-supplied transcript (for example one
/// built with [`CascadeTranscript::counters_only`]).
pub fn run_cascade_with(
    alice_key: &BitString,
    bob_key: &BitString,
    qber_est: f64,
    config: &CascadeConfig,
    mut transcript: CascadeTranscript,
) -> Result<ReconciliationResult> {
    config.validate()?;
    let n = alice_key.len();
    if bob_key.len() != n {
        return Err(Error::LengthMismatch { left: n, right: bob_key.len() });
    }
    if n < 2 {
        return Err(Error::param("key", format!("length {n} < 2")));
    }
    if !(0.0..0.5).contains(&qber_est) {
        return Err(Error::param("qber_est", format!("{qber_est} not in [0, 0.5)")));
    }
    let alice = alice_key.as_slice();
    let mut bob = bob_key.as_slice().to_vec();
    let e_true = alice_key.hamming(bob_key)? as f64 / n as f64;

    let mut passes: Vec<Pass> = Vec::with_capacity(config.n_passes as usize);
    for (i, &k) in config.block_sizes(qber_est, n).iter().enumerate() {
        let pass_idx = i as u32;
        let mut order: Vec<usize> = (0..n).collect();
        if i > 0 {
            order.shuffle(&mut indexed_stream(config.seed, Stream::CascadePermutation, i as u64));
        }
        let mut pass = Pass::new(order, k);
        transcript.passes.push(PassInfo { pass: pass_idx, block_size: k, n_blocks: pass.n_blocks() });

        let mut heap = BinaryHeap::new();
        for j in 0..pass.n_blocks() {
            let pa = parity_of(pass.block(j), alice);
            let pb = parity_of(pass.block(j), &bob);
            transcript.record(Direction::AliceToBob, MessageKind::BlockParity, pass_idx, j as u64, 1, pa as u64);
            transcript.record(Direction::BobToAlice, MessageKind::BlockParity, pass_idx, j as u64, 1, pb as u64);
            pass.alice_parity.push(pa);
            pass.bob_parity.push(pb);
            if pa != pb {
                heap.push(Reverse((pass.block(j).len(), pass_idx, j)));
            }
        }
        passes.push(pass);

        while let Some(Reverse((_, p, j))) = heap.pop() {
            let p = p as usize;
            if !passes[p].mismatched(j) {
                continue;
            }
            let positions = passes[p].block(j);
            let at = locate(positions, alice, &bob, &mut transcript, p as u32, j as u64)?;
            let pos = positions[at];
            let k_block = positions.len();
            debug_assert_ne!(alice[pos], bob[pos]);
            bob[pos] ^= 1;
            transcript.record(Direction::BobToAlice, MessageKind::CorrectionAnnounce, p as u32, j as u64, ceil_log2(k_block), at as u64);
            transcript.corrections.push(Correction { pass: p as u32, position: pos });
            for (q, other) in passes.iter_mut().enumerate() {
                let b = other.block_of[pos] as usize;
                other.bob_parity[b] ^= 1;
                if other.mismatched(b) {
                    heap.push(Reverse((other.block(b).len(), q as u32, b)));
                }
            }
        }
        debug_assert!(passes.iter().all(|p| (0..p.n_blocks()).all(|j| !p.mismatched(j))));
    }

    let corrected_bob_key = BitString::from_bits(&bob);
    transcript.final_mismatch = alice_key.hamming(&corrected_bob_key)?;
    let measured_f = if e_true > 0.0 { Some(measured_efficiency(&transcript, e_true, n)?) } else { None };
    Ok(ReconciliationResult { corrected_bob_key, transcript, measured_f })
}

/// leak_ab_bits / (n h(e_true)).
pub fn measured_efficiency(transcript: &CascadeTranscript, e_true: f64, n: usize) -> Result<f64> {
    if !(e_true > 0.0) {
        return Err(Error::param("e_true", "efficiency is undefined at zero error rate"));
    }
    if n == 0 {
        return Err(Error::param("n", "empty key"));
    }
    Ok(transcript.leak_ab_bits as f64 / (n as f64 * binary_entropy(e_true)?))
}

/// Recomputes every tracked block parity of every pass on the final keys and reports
/// whether all of them agree. Used to audit the end-of-pass invariant.
pub fn all_blocks_even(alice: &BitString, bob: &BitString, qber_est: f64, config: &CascadeConfig) -> bool {
    let n = alice.len();
    config.block_sizes(qber_est, n).iter().enumerate().all(|(i, &k)| {
        let mut order: Vec<usize> = (0..n).collect();
        if i > 0 {
            order.shuffle(&mut indexed_stream(config.seed, Stream::CascadePermutation, i as u64));
        }
        order.chunks(k).all(|block| parity_of(block, alice.as_slice()) == parity_of(block, bob.as_slice()))
    })
}
