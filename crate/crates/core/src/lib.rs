//! Contamination-audit toolkit for code corpora.
//!
//! Quantifies whether a language model has memorized benchmark solutions by
//! combining three signals over curated corpora:
//!
//! - strided negative log-likelihood and greedy n-gram accuracy ([`metrics`])
//!   against any [`backend::Backend`] (a trainable n-gram reference model, a
//!   remote scoring server, or test oracles);
//! - near-duplicate structure via MinHash/LSH ([`dedup`]) for corpus
//!   filtering;
//! - repository membership in pretraining-index snapshots ([`membership`]).
//!
//! [`analysis`] turns dataset summaries into pairwise NLL ratio matrices and
//! mixed-effects regressions on model size and training budget. [`miner`]
//! collects candidate unseen repositories from a code-hosting API. All
//! operations are deterministic given their inputs and seeds.

pub mod analysis;
pub mod backend;
pub mod corpus;
pub mod dedup;
pub mod error;
pub mod fixtures;
pub mod membership;
pub mod metrics;
pub mod miner;

pub use error::{Error, Result};
