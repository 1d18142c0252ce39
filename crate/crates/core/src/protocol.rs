//! BB84 session: raw transmission, sifting, and the acceptance test.

use rand::seq::index;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::quantum::{channel_state, outcome_distribution, Basis, ChannelParams, JointOutcomeDistribution, PovmSet};
use crate::rng::{stream, Stream};

pub const MIN_RAW_SIGNALS: usize = 100;
pub const DEFAULT_TEST_FRACTION: f64 = 0.1;
pub const DEFAULT_QBER_THRESHOLD: f64 = 0.11;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub n_raw: usize,
    pub params: ChannelParams,
    pub test_fraction: f64,
    pub qber_threshold: f64,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(n_raw: usize, params: ChannelParams, seed: u64) -> Self {
        SessionConfig {
            n_raw,
            params,
            test_fraction: DEFAULT_TEST_FRACTION,
            qber_threshold: DEFAULT_QBER_THRESHOLD,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_raw < MIN_RAW_SIGNALS {
            return Err(Error::param("n_raw", format!("{} < {MIN_RAW_SIGNALS}", self.n_raw)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 0.5) {
            return Err(Error::param("test_fraction", format!("{} not in (0, 0.5)", self.test_fraction)));
        }
        if !(0.0..=1.0).contains(&self.qber_threshold) {
            return Err(Error::param("qber_threshold", format!("{} not in [0, 1]", self.qber_threshold)));
        }
        self.params.validate()
    }
}

/// Outcome of one session after sifting and parameter estimation. Test bits have
/// already been removed from both keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiftedSession {
    pub n_raw: usize,
    /// Matched-basis rounds, including those later disclosed as test bits.
    pub n_matched: usize,
    pub n_sifted: usize,
    pub test_bits: usize,
    pub alice_key: BitString,
    pub bob_key: BitString,
    pub qber_est: f64,
    /// Realized error fraction of the retained keys (of all matched rounds if aborted).
    pub qber_true: f64,
    pub test_fraction: f64,
    pub qber_threshold: f64,
    pub aborted: bool,
    pub seed: u64,
    pub params: ChannelParams,
}

impl SiftedSession {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: SiftedSession = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |r: String| Err(Error::malformed("session", r));
        if self.alice_key.len() != self.bob_key.len() {
            return bad(format!("key lengths differ: {} vs {}", self.alice_key.len(), self.bob_key.len()));
        }
        if self.alice_key.len() != self.n_sifted {
            return bad(format!("n_sifted {} does not match key length {}", self.n_sifted, self.alice_key.len()));
        }
        if self.n_sifted > self.n_raw || self.n_matched > self.n_raw {
            return bad("more sifted than raw signals".into());
        }
        if !self.aborted && self.n_sifted.checked_add(self.test_bits) != Some(self.n_matched) {
            return bad("n_sifted + test_bits must equal n_matched".into());
        }
        for (name, v) in [("qber_est", self.qber_est), ("qber_true", self.qber_true)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} not in [0, 1]"));
            }
        }
        if self.aborted && (self.qber_est <= self.qber_threshold || self.n_sifted != 0) {
            return bad("aborted session must exceed the threshold and carry empty keys".into());
        }
        self.params.validate().or_else(|e| bad(e.to_string()))
    }
}

/// Session plus bookkeeping that is not part of the serialized record.
#[derive(Clone, Debug)]
pub struct SessionTrace {
    pub session: SiftedSession,
    /// Raw-round index of every matched-basis round, in order.
    pub matched_rounds: Vec<usize>,
    /// Positions within the matched rounds disclosed for the acceptance test (sorted).
    pub test_positions: Vec<usize>,
}

/// Random bits drawn 64 at a time.
struct BitSource<R> {
    rng: R,
    word: u64,
    left: u32,
}

impl<R: RngCore> BitSource<R> {
    fn new(rng: R) -> Self {
        BitSource { rng, word: 0, left: 0 }
    }

    fn next_bit(&mut self) -> u8 {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let b = (self.word & 1) as u8;
        self.word >>= 1;
        self.left -= 1;
        b
    }
}

/// Basis choice with the POVM's basis probabilities; uses one bit when they are equal.
fn draw_basis<R: RngCore>(bits: &mut BitSource<R>, p_z: f64) -> Basis {
    if p_z == 0.5 {
        Basis::from_index(bits.next_bit() as usize)
    } else if (bits.rng.random::<f64>()) < p_z {
        Basis::Z
    } else {
        Basis::X
    }
}

pub fn run_session(config: &SessionConfig) -> Result<SiftedSession> {
    run_session_traced(config).map(|t| t.session)
}

pub fn run_session_traced(config: &SessionConfig) -> Result<SessionTrace> {
    config.validate()?;
    let povm = PovmSet::default();
    let dist = outcome_distribution(&channel_state(config.params)?, &povm)?;
    sample_session(config, &povm, &dist)
}

fn sample_session(config: &SessionConfig, povm: &PovmSet, dist: &JointOutcomeDistribution) -> Result<SessionTrace> {
    let n = config.n_raw;
    let mut alice_bits = BitSource::new(stream(config.seed, Stream::AliceBits));
    let mut alice_bases = BitSource::new(stream(config.seed, Stream::AliceBases));
    let mut bob_bases = BitSource::new(stream(config.seed, Stream::BobBases));
    let mut outcomes = stream(config.seed, Stream::BobOutcomes);

    // Pr[y = 1 | alpha, beta = alpha, x]
    let mut p_one = [[0.0; 2]; 2];
    for basis in Basis::ALL {
        for x in 0..2u8 {
            p_one[basis.index()][x as usize] = dist.bob_one_given(basis, basis, x);
        }
    }

    let mut matched_rounds = Vec::with_capacity(n / 2 + 16);
    let mut sifted_a = Vec::with_capacity(n / 2 + 16);
    let mut sifted_b = Vec::with_capacity(n / 2 + 16);
    for round in 0..n {
        let x = alice_bits.next_bit();
        let alpha = draw_basis(&mut alice_bases, povm.p_z);
        let beta = draw_basis(&mut bob_bases, povm.p_z);
        if alpha != beta {
            continue;
        }
        let u: f64 = outcomes.random();
        let y = (u < p_one[alpha.index()][x as usize]) as u8;
        matched_rounds.push(round);
        sifted_a.push(x);
        sifted_b.push(y);
    }

    let n_matched = sifted_a.len();
    let m = if n_matched >= 2 {
        ((config.test_fraction * n_matched as f64).round() as usize).clamp(1, n_matched - 1)
    } else {
        0
    };
    let mut test_rng = stream(config.seed, Stream::TestSet);
    let mut test_positions = index::sample(&mut test_rng, n_matched, m).into_vec();
    test_positions.sort_unstable();

    let test_errors = test_positions.iter().filter(|&&i| sifted_a[i] != sifted_b[i]).count();
    let qber_est = if m == 0 { 0.0 } else { test_errors as f64 / m as f64 };

    let mut is_test = vec![false; n_matched];
    for &i in &test_positions {
        is_test[i] = true;
    }
    let alice_key: BitString = (0..n_matched).filter(|&i| !is_test[i]).map(|i| sifted_a[i]).collect();
    let bob_key: BitString = (0..n_matched).filter(|&i| !is_test[i]).map(|i| sifted_b[i]).collect();

    let aborted = qber_est > config.qber_threshold;
    let (alice_key, bob_key, qber_true) = if aborted {
        let all_errors = (0..n_matched).filter(|&i| sifted_a[i] != sifted_b[i]).count();
        let e = if n_matched == 0 { 0.0 } else { all_errors as f64 / n_matched as f64 };
        (BitString::new(), BitString::new(), e)
    } else {
        let e = if alice_key.is_empty() { 0.0 } else { qber_exact(&alice_key, &bob_key)? };
        (alice_key, bob_key, e)
    };

    let session = SiftedSession {
        n_raw: n,
        n_matched,
        n_sifted: alice_key.len(),
        test_bits: m,
        alice_key,
        bob_key,
        qber_est,
        qber_true,
        test_fraction: config.test_fraction,
        qber_threshold: config.qber_threshold,
        aborted,
        seed: config.seed,
        params: config.params,
    };
    Ok(SessionTrace { session, matched_rounds, test_positions })
}

/// Replays the basis streams of a session: (alice_bases, bob_bases) for every raw round.
pub fn replay_bases(n_raw: usize, seed: u64) -> (Vec<Basis>, Vec<Basis>) {
    let p_z = PovmSet::default().p_z;
    let mut a = BitSource::new(stream(seed, Stream::AliceBases));
    let mut b = BitSource::new(stream(seed, Stream::BobBases));
    (0..n_raw).map(|_| (draw_basis(&mut a, p_z), draw_basis(&mut b, p_z))).unzip()
}

/// Hamming distance divided by length.
pub fn qber_exact(alice: &BitString, bob: &BitString) -> Result<f64> {
    if alice.is_empty() && bob.is_empty() {
        return Err(Error::param("key", "QBER of empty keys is undefined"));
    }
    Ok(alice.hamming(bob)? as f64 / alice.len() as f64)
}
