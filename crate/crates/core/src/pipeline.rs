//! Post-processing of a sifted session: reconciliation, verification, amplification.

use serde::{Deserialize, Serialize};

use crate::amplify::{privacy_amplify, verify_keys, AmplificationPlan, FinalKeySidecar, DEFAULT_SECURITY_MARGIN};
use crate::bits::BitString;
use crate::cascade::{run_cascade_with, CascadeConfig, CascadeTranscript, ReconciliationResult};
use crate::error::{Error, Result};
use crate::keyrate::{binary_entropy, entropy_rate_per_sifted};
use crate::protocol::SiftedSession;
use crate::rng::derive_seed;

/// Where the per-bit entropy in the amplification plan comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropySource {
    /// f(rho) / p_pass at the session's channel parameters.
    #[default]
    Channel,
    /// 1 - h(qber_est).
    Conservative,
}

impl EntropySource {
    pub fn rate(self, session: &SiftedSession) -> Result<f64> {
        match self {
            EntropySource::Channel => entropy_rate_per_sifted(session.params),
            EntropySource::Conservative => Ok(1.0 - binary_entropy(session.qber_est.min(0.5))?),
        }
    }
}

/// Seeds for the three post-processing stages, derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub cascade: u64,
    pub hash: u64,
    pub amplification: u64,
}

impl StageSeeds {
    pub fn derive(seed: u64) -> Self {
        StageSeeds { cascade: derive_seed(seed, 1), hash: derive_seed(seed, 2), amplification: derive_seed(seed, 3) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PostProcessConfig {
    pub cascade: CascadeConfig,
    pub seeds: StageSeeds,
    pub security_margin: f64,
    pub entropy: EntropySource,
    /// Keep every Cascade message (needed for transcript export).
    pub keep_messages: bool,
    /// Compute the Toeplitz output; otherwise only the plan is produced.
    pub apply_amplification: bool,
}

impl PostProcessConfig {
    pub fn new(seed: u64) -> Self {
        let seeds = StageSeeds::derive(seed);
        PostProcessConfig {
            cascade: CascadeConfig::with_seed(seeds.cascade),
            seeds,
            security_margin: DEFAULT_SECURITY_MARGIN,
            entropy: EntropySource::Channel,
            keep_messages: true,
            apply_amplification: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PostProcessOutcome {
    pub reconciliation: ReconciliationResult,
    pub verified: bool,
    pub plan: AmplificationPlan,
    /// `None` when verification failed or amplification was not requested.
    pub final_key: Option<BitString>,
    pub sidecar: FinalKeySidecar,
}

impl PostProcessOutcome {
    /// Final key length: the plan length when verified, otherwise 0.
    pub fn final_len(&self) -> usize {
        if self.verified { self.plan.output_len } else { 0 }
    }
}

pub fn post_process(session: &SiftedSession, config: &PostProcessConfig) -> Result<PostProcessOutcome> {
    if session.aborted {
        return Err(Error::param("session", "was aborted; nothing to reconcile"));
    }
    let transcript = if config.keep_messages { CascadeTranscript::new() } else { CascadeTranscript::counters_only() };
    let reconciliation = run_cascade_with(&session.alice_key, &session.bob_key, session.qber_est, &config.cascade, transcript)?;
    let verified = verify_keys(&session.alice_key, &reconciliation.corrected_bob_key, config.seeds.hash)?;
    let t = &reconciliation.transcript;
    let leak_total = t.leak_ab_bits + t.leak_ba_bits + session.test_bits as u64;
    let plan = AmplificationPlan::new(session.n_sifted, leak_total, config.entropy.rate(session)?, config.security_margin)?;
    let final_key = if verified && config.apply_amplification {
        Some(privacy_amplify(&reconciliation.corrected_bob_key, &plan, config.seeds.amplification)?)
    } else {
        None
    };
    let sidecar = FinalKeySidecar {
        input_len: plan.input_len,
        leak_total,
        leak_ab_bits: t.leak_ab_bits,
        leak_ba_bits: t.leak_ba_bits,
        test_bits: session.test_bits,
        entropy_rate: plan.entropy_rate,
        security_margin: plan.security_margin,
        output_len: if verified { plan.output_len } else { 0 },
        hash_seed: config.seeds.hash,
        amplification_seed: config.seeds.amplification,
        verified,
    };
    Ok(PostProcessOutcome { reconciliation, verified, plan, final_key, sidecar })
}
