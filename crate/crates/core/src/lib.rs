//! Deterministic BB84 simulation and post-processing.
//!
//! The pipeline is: [`protocol::run_session`] (sifting and parameter estimation),
//! [`cascade::run_cascade`] (interactive reconciliation with a full message transcript),
//! [`amplify`] (hash verification and Toeplitz privacy amplification). The
//! [`keyrate`] module evaluates relative-entropy objectives on the simulated channel
//! state, and [`predictor`] trains a small encoder-decoder regressor on corpora built
//! by [`dataset`].

pub mod amplify;
pub mod bench;
pub mod bits;
pub mod cascade;
pub mod dataset;
pub mod error;
pub mod keyrate;
pub mod pipeline;
pub mod predictor;
pub mod protocol;
pub mod quantum;
pub mod rng;

pub use bits::BitString;
pub use error::{Error, Result};
pub use quantum::ChannelParams;
