//! Uniform model interface: tokenize text, score token sequences with
//! per-token log-probabilities (natural log), and greedily continue a
//! context.
//!
//! Three families of implementations live here: a trainable smoothed n-gram
//! reference model ([`reference`]), an HTTP client for a remote scorer
//! ([`remote`]), and deterministic test oracles ([`oracles`]). Position 1 of
//! every sequence is unscored (it has no context), so scoring a t-token
//! sequence yields exactly t-1 log-probabilities.

mod oracles;
mod reference;
mod remote;
pub mod stub;
mod tokenizer;

pub use oracles::{ConstantAdversary, EchoOracle, ReplayBackend, UniformBackend};
pub use reference::{train_reference_lm, ReferenceBackend, ReferenceLm, Smoothing};
pub use remote::{RemoteBackend, RemoteConfig};
pub use tokenizer::ByteTokenizer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model-space token-id sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq(pub Vec<u32>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// The first `n` tokens as a new sequence.
    pub fn prefix(&self, n: usize) -> TokenSeq {
        TokenSeq(self.0[..n].to_vec())
    }

    /// Tokens in `[start, start + n)` as a new sequence.
    pub fn slice(&self, start: usize, n: usize) -> TokenSeq {
        TokenSeq(self.0[start..start + n].to_vec())
    }
}

impl From<Vec<u32>> for TokenSeq {
    fn from(v: Vec<u32>) -> Self {
        TokenSeq(v)
    }
}

/// A sequence together with the log-probability of each scored position:
/// `logprobs[i]` is ln p(tokens[i+1] | tokens[0..=i]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub tokens: TokenSeq,
    pub logprobs: Vec<f64>,
}

impl ScoredSequence {
    /// Validates the two structural invariants: one log-probability per
    /// position after the first, and no log-probability above zero.
    pub fn new(tokens: TokenSeq, logprobs: Vec<f64>) -> Result<Self> {
        if logprobs.len() + 1 != tokens.len() {
            return Err(Error::Protocol(format!(
                "expected {} logprobs for {} tokens, got {}",
                tokens.len().saturating_sub(1),
                tokens.len(),
                logprobs.len()
            )));
        }
        if let Some(bad) = logprobs.iter().find(|lp| **lp > 0.0 || lp.is_nan()) {
            return Err(Error::Protocol(format!(
                "logprob {bad} is not a valid log-probability"
            )));
        }
        Ok(Self { tokens, logprobs })
    }
}

/// Identity and limits of a model backend. The tokenizer-family tag groups
/// models that share a tokenizer, which downstream analysis uses as a random
/// effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub vocab_size: u32,
    pub context_window: usize,
    pub family: String,
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.context_window < 2 {
            return Err(Error::Validation(format!(
                "context window must be at least 2, got {}",
                self.context_window
            )));
        }
        Ok(())
    }
}

/// A scoring model. Implementations must be deterministic: identical inputs
/// against identical state always yield identical outputs.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn tokenize(&self, text: &str) -> Result<TokenSeq>;

    fn detokenize(&self, tokens: &TokenSeq) -> Result<String>;

    /// Log-probabilities for positions 2..=t of a sequence of length t >= 2.
    fn score(&self, tokens: &TokenSeq) -> Result<ScoredSequence>;

    /// Greedy continuation: each emitted token is the argmax next token given
    /// the context plus previously generated tokens, ties broken by the
    /// smallest token id.
    fn greedy_continue(&self, context: &TokenSeq, n: usize) -> Result<TokenSeq>;
}

pub(crate) fn check_scorable(tokens: &TokenSeq, window: usize) -> Result<()> {
    if tokens.len() < 2 {
        return Err(Error::Validation(format!(
            "scoring needs at least 2 tokens, got {}",
            tokens.len()
        )));
    }
    if tokens.len() > window {
        return Err(Error::WindowExceeded {
            len: tokens.len(),
            window,
        });
    }
    Ok(())
}
