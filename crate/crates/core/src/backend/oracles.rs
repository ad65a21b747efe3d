//! Deterministic oracle backends with known extreme or scripted behavior.
//!
//! - [`EchoOracle`] assigns probability 1 to its bound document and continues
//!   it verbatim, pinning the zero-NLL / perfect-accuracy end of both metrics.
//! - [`ConstantAdversary`] always emits one fixed token.
//! - [`UniformBackend`] spreads probability uniformly over its vocabulary.
//! - [`ReplayBackend`] replays recorded per-token log-probabilities and
//!   scripted match/miss behavior for a single document.

use std::collections::BTreeSet;

use super::tokenizer::{ByteTokenizer, BYTE_VOCAB_SIZE};
use super::{Backend, BackendDescriptor, ScoredSequence, TokenSeq};
use crate::error::{Error, Result};

const ORACLE_WINDOW: usize = 1 << 30;

fn oracle_descriptor(name: &str, vocab_size: u32) -> BackendDescriptor {
    BackendDescriptor {
        name: name.to_string(),
        vocab_size,
        context_window: ORACLE_WINDOW,
        family: "oracle".to_string(),
    }
}

fn check_context(context: &TokenSeq, n: usize) -> Result<()> {
    if context.is_empty() || n == 0 {
        return Err(Error::Validation(
            "greedy continuation needs a non-empty context and n >= 1".to_string(),
        ));
    }
    Ok(())
}

/// Probability-1 oracle bound to one gold document.
pub struct EchoOracle {
    gold: TokenSeq,
    tokenizer: ByteTokenizer,
    descriptor: BackendDescriptor,
}

impl EchoOracle {
    pub fn new(gold: TokenSeq) -> Self {
        Self {
            gold,
            tokenizer: ByteTokenizer,
            descriptor: oracle_descriptor("echo-oracle", BYTE_VOCAB_SIZE),
        }
    }

    pub fn for_text(text: &str) -> Self {
        Self::new(ByteTokenizer.tokenize(text))
    }
}

impl Backend for EchoOracle {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Result<TokenSeq> {
        Ok(self.tokenizer.tokenize(text))
    }

    fn detokenize(&self, tokens: &TokenSeq) -> Result<String> {
        self.tokenizer.detokenize(tokens)
    }

    fn score(&self, tokens: &TokenSeq) -> Result<ScoredSequence> {
        super::check_scorable(tokens, self.descriptor.context_window)?;
        ScoredSequence::new(tokens.clone(), vec![0.0; tokens.len() - 1])
    }

    fn greedy_continue(&self, context: &TokenSeq, n: usize) -> Result<TokenSeq> {
        check_context(context, n)?;
        let k = context.len();
        if k + n > self.gold.len() {
            return Err(Error::Validation(format!(
                "echo oracle asked for tokens {}..{} of a {}-token document",
                k,
                k + n,
                self.gold.len()
            )));
        }
        Ok(self.gold.slice(k, n))
    }
}

/// Always predicts `token`, with a uniform scoring distribution.
pub struct ConstantAdversary {
    token: u32,
    tokenizer: ByteTokenizer,
    descriptor: BackendDescriptor,
}

impl ConstantAdversary {
    pub fn new(token: u32) -> Self {
        Self {
            token,
            tokenizer: ByteTokenizer,
            descriptor: oracle_descriptor("constant-adversary", BYTE_VOCAB_SIZE),
        }
    }
}

impl Default for ConstantAdversary {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Backend for ConstantAdversary {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Result<TokenSeq> {
        Ok(self.tokenizer.tokenize(text))
    }

    fn detokenize(&self, tokens: &TokenSeq) -> Result<String> {
        self.tokenizer.detokenize(tokens)
    }

    fn score(&self, tokens: &TokenSeq) -> Result<ScoredSequence> {
        super::check_scorable(tokens, self.descriptor.context_window)?;
        let lp = -(f64::from(self.descriptor.vocab_size)).ln();
        ScoredSequence::new(tokens.clone(), vec![lp; tokens.len() - 1])
    }

    fn greedy_continue(&self, context: &TokenSeq, n: usize) -> Result<TokenSeq> {
        check_context(context, n)?;
        Ok(TokenSeq(vec![self.token; n]))
    }
}

/// Uniform distribution over a vocabulary of the given size.
pub struct UniformBackend {
    tokenizer: ByteTokenizer,
    descriptor: BackendDescriptor,
}

impl UniformBackend {
    pub fn new(vocab_size: u32) -> Self {
        Self {
            tokenizer: ByteTokenizer,
            descriptor: oracle_descriptor("uniform", vocab_size),
        }
    }
}

impl Backend for UniformBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Result<TokenSeq> {
        Ok(self.tokenizer.tokenize(text))
    }

    fn detokenize(&self, tokens: &TokenSeq) -> Result<String> {
        self.tokenizer.detokenize(tokens)
    }

    fn score(&self, tokens: &TokenSeq) -> Result<ScoredSequence> {
        super::check_scorable(tokens, self.descriptor.context_window)?;
        let lp = -(f64::from(self.descriptor.vocab_size)).ln();
        ScoredSequence::new(tokens.clone(), vec![lp; tokens.len() - 1])
    }

    fn greedy_continue(&self, context: &TokenSeq, n: usize) -> Result<TokenSeq> {
        check_context(context, n)?;
        // argmax of a uniform distribution ties everywhere; smallest id wins
        Ok(TokenSeq(vec![0; n]))
    }
}

/// Replays recorded behavior for one document: fixed per-position
/// log-probabilities for scoring, and scripted hit-or-miss continuations.
pub struct ReplayBackend {
    gold: TokenSeq,
    logprobs: Vec<f64>,
    match_starts: BTreeSet<usize>,
    tokenizer: ByteTokenizer,
    descriptor: BackendDescriptor,
}

impl ReplayBackend {
    /// `logprobs` must hold one value per scored position of `gold`
    /// (length t-1). `match_starts` lists the context lengths at which a
    /// greedy continuation reproduces the document.
    pub fn new(gold: TokenSeq, logprobs: Vec<f64>, match_starts: BTreeSet<usize>) -> Result<Self> {
        if logprobs.len() + 1 != gold.len() {
            return Err(Error::Validation(format!(
                "recorded logprobs ({}) must cover every scored position of a {}-token document",
                logprobs.len(),
                gold.len()
            )));
        }
        Ok(Self {
            gold,
            logprobs,
            match_starts,
            tokenizer: ByteTokenizer,
            descriptor: oracle_descriptor("replay", BYTE_VOCAB_SIZE),
        })
    }
}

impl Backend for ReplayBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Result<TokenSeq> {
        Ok(self.tokenizer.tokenize(text))
    }

    fn detokenize(&self, tokens: &TokenSeq) -> Result<String> {
        self.tokenizer.detokenize(tokens)
    }

    fn score(&self, tokens: &TokenSeq) -> Result<ScoredSequence> {
        super::check_scorable(tokens, self.descriptor.context_window)?;
        if tokens != &self.gold {
            return Err(Error::Validation(
                "replay backend received a sequence it has no recording for".to_string(),
            ));
        }
        ScoredSequence::new(tokens.clone(), self.logprobs.clone())
    }

    fn greedy_continue(&self, context: &TokenSeq, n: usize) -> Result<TokenSeq> {
        check_context(context, n)?;
        let k = context.len();
        if k + n > self.gold.len() {
            return Err(Error::Validation(format!(
                "replay backend asked for tokens {}..{} of a {}-token document",
                k,
                k + n,
                self.gold.len()
            )));
        }
        let mut out = self.gold.slice(k, n);
        if !self.match_starts.contains(&k) {
            // guarantee a mismatch by flipping the final token
            let last = out.0.len() - 1;
            out.0[last] = (out.0[last] + 1) % self.descriptor.vocab_size;
        }
        Ok(out)
    }
}
