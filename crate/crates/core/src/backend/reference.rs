//! Trainable smoothed n-gram language model, the deterministic desk-scale
//! stand-in for a neural scorer.
//!
//! Counts are gathered per order over begin-marker-prefixed sequences. The
//! next-token distribution is an add-k estimate per order, mixed across
//! orders 1..=n by fixed interpolation weights. Every conditional
//! distribution normalizes to 1 over the trained token inventory by
//! construction.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::tokenizer::{ByteTokenizer, BYTE_VOCAB_SIZE};
use super::{check_scorable, Backend, BackendDescriptor, ScoredSequence, TokenSeq};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Context-only begin marker; never emitted, never part of the vocabulary.
const BOS: u32 = u32::MAX;

/// Smoothing scheme for [`ReferenceLm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Add-k estimate at the requested order only.
    AddK(f64),
    /// Add-k at every order 1..=n, mixed with weights proportional to
    /// 4^(order-1) so the highest order dominates.
    Interpolated(f64),
}

#[derive(Debug, Default, Clone)]
struct ContextCounts {
    next: HashMap<u32, u64>,
    total: u64,
}

/// Smoothed interpolated n-gram model over token ids.
#[derive(Debug, Clone)]
pub struct ReferenceLm {
    order: usize,
    /// counts[o-1] holds contexts of length min(o-1, distance from start).
    counts: Vec<HashMap<Vec<u32>, ContextCounts>>,
    vocab: Vec<u32>,
    vocab_set: HashSet<u32>,
    weights: Vec<f64>,
    add_k: f64,
}

impl ReferenceLm {
    /// Train from raw token sequences. Each sequence is prefixed with a begin
    /// marker; the marker participates in contexts but is never predicted.
    pub fn train(sequences: &[Vec<u32>], order: usize, smoothing: Smoothing) -> Result<Self> {
        if order == 0 {
            return Err(Error::Validation("order must be at least 1".to_string()));
        }
        if sequences.iter().all(|s| s.is_empty()) {
            return Err(Error::Validation(
                "cannot train on an empty corpus".to_string(),
            ));
        }
        let (add_k, weights) = match smoothing {
            Smoothing::AddK(k) => {
                let mut w = vec![0.0; order];
                w[order - 1] = 1.0;
                (k, w)
            }
            Smoothing::Interpolated(k) => {
                let raw: Vec<f64> = (0..order).map(|o| 4f64.powi(o as i32)).collect();
                let sum: f64 = raw.iter().sum();
                (k, raw.iter().map(|x| x / sum).collect())
            }
        };
        if add_k <= 0.0 {
            return Err(Error::Validation(
                "smoothing constant must be positive".to_string(),
            ));
        }

        let mut vocab_set = HashSet::new();
        let mut counts: Vec<HashMap<Vec<u32>, ContextCounts>> =
            (0..order).map(|_| HashMap::new()).collect();

        for seq in sequences {
            for &t in seq {
                if t == BOS {
                    return Err(Error::Validation(
                        "token id u32::MAX is reserved for the begin marker".to_string(),
                    ));
                }
                vocab_set.insert(t);
            }
            let mut full = Vec::with_capacity(seq.len() + 1);
            full.push(BOS);
            full.extend_from_slice(seq);
            for i in 1..full.len() {
                for (o, bucket) in counts.iter_mut().enumerate() {
                    let start = i.saturating_sub(o);
                    let entry = bucket.entry(full[start..i].to_vec()).or_default();
                    *entry.next.entry(full[i]).or_insert(0) += 1;
                    entry.total += 1;
                }
            }
        }

        let vocab: Vec<u32> = {
            let sorted: BTreeSet<u32> = vocab_set.iter().copied().collect();
            sorted.into_iter().collect()
        };
        Ok(Self {
            order,
            counts,
            vocab,
            vocab_set,
            weights,
            add_k,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Sorted token inventory observed at training time.
    pub fn vocab(&self) -> &[u32] {
        &self.vocab
    }

    pub fn contains(&self, token: u32) -> bool {
        self.vocab_set.contains(&token)
    }

    fn order_prob(&self, o: usize, context: &[u32], token: u32) -> f64 {
        let ctx_len = (o).min(context.len());
        let ctx = &context[context.len() - ctx_len..];
        let v = self.vocab.len() as f64;
        match self.counts[o].get(ctx) {
            Some(cc) => {
                let c = *cc.next.get(&token).unwrap_or(&0) as f64;
                (c + self.add_k) / (cc.total as f64 + self.add_k * v)
            }
            None => 1.0 / v,
        }
    }

    /// p(token | context), where `context` already carries the begin marker.
    fn prob(&self, context: &[u32], token: u32) -> f64 {
        (0..self.order)
            .filter(|&o| self.weights[o] > 0.0)
            .map(|o| self.weights[o] * self.order_prob(o, context, token))
            .sum()
    }

    /// Full next-token distribution for a raw (unmarked) context. Test and
    /// diagnostic surface; sums to 1 over the inventory within 1e-9.
    pub fn distribution(&self, context: &[u32]) -> Vec<(u32, f64)> {
        let mut full = Vec::with_capacity(context.len() + 1);
        full.push(BOS);
        full.extend_from_slice(context);
        self.vocab
            .iter()
            .map(|&v| (v, self.prob(&full, v)))
            .collect()
    }

    fn check_in_vocab(&self, tokens: &[u32]) -> Result<()> {
        for &t in tokens {
            if !self.vocab_set.contains(&t) {
                return Err(Error::OutOfVocabulary {
                    token: t,
                    vocab_size: self.vocab.len() as u32,
                });
            }
        }
        Ok(())
    }

    /// Log-probabilities for positions 2..=t; position 1 is unscored.
    pub fn score_tokens(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        self.check_in_vocab(tokens)?;
        let mut full = Vec::with_capacity(tokens.len() + 1);
        full.push(BOS);
        full.extend_from_slice(tokens);
        let mut logprobs = Vec::with_capacity(tokens.len().saturating_sub(1));
        for i in 2..full.len() {
            let p = self.prob(&full[..i], full[i]);
            logprobs.push(p.ln().min(0.0));
        }
        Ok(logprobs)
    }

    /// Greedy argmax continuation, ties broken by smallest token id.
    pub fn greedy_tokens(&self, context: &[u32], n: usize) -> Result<Vec<u32>> {
        self.check_in_vocab(context)?;
        let mut full = Vec::with_capacity(context.len() + n + 1);
        full.push(BOS);
        full.extend_from_slice(context);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut best_token = self.vocab[0];
            let mut best_p = f64::NEG_INFINITY;
            for &v in &self.vocab {
                let p = self.prob(&full, v);
                if p > best_p {
                    best_p = p;
                    best_token = v;
                }
            }
            full.push(best_token);
            out.push(best_token);
        }
        Ok(out)
    }
}

/// Train a [`ReferenceLm`] over the byte-tokenized contents of a corpus.
pub fn train_reference_lm(corpus: &Corpus, order: usize, smoothing: Smoothing) -> Result<ReferenceLm> {
    if corpus.is_empty() {
        return Err(Error::Validation(
            "cannot train on an empty corpus".to_string(),
        ));
    }
    let tok = ByteTokenizer;
    let sequences: Vec<Vec<u32>> = corpus
        .documents()
        .iter()
        .map(|d| tok.tokenize(&d.content).0)
        .collect();
    ReferenceLm::train(&sequences, order, smoothing)
}

/// [`Backend`] wrapping a [`ReferenceLm`] behind the byte tokenizer.
#[derive(Debug, Clone)]
pub struct ReferenceBackend {
    lm: ReferenceLm,
    tokenizer: ByteTokenizer,
    descriptor: BackendDescriptor,
}

impl ReferenceBackend {
    pub fn new(lm: ReferenceLm, context_window: usize, name: impl Into<String>) -> Result<Self> {
        let descriptor = BackendDescriptor {
            name: name.into(),
            vocab_size: BYTE_VOCAB_SIZE,
            context_window,
            family: "reference-ngram".to_string(),
        };
        descriptor.validate()?;
        Ok(Self {
            lm,
            tokenizer: ByteTokenizer,
            descriptor,
        })
    }

    /// Train on a corpus with the default configuration: order 5, add-0.01
    /// interpolated across orders 1..=5.
    pub fn train_default(corpus: &Corpus, context_window: usize) -> Result<Self> {
        let lm = train_reference_lm(corpus, 5, Smoothing::Interpolated(0.01))?;
        Self::new(lm, context_window, "reference-lm")
    }

    pub fn lm(&self) -> &ReferenceLm {
        &self.lm
    }
}

impl Backend for ReferenceBackend {
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
        check_scorable(tokens, self.descriptor.context_window)?;
        let logprobs = self.lm.score_tokens(tokens.as_slice())?;
        ScoredSequence::new(tokens.clone(), logprobs)
    }

    fn greedy_continue(&self, context: &TokenSeq, n: usize) -> Result<TokenSeq> {
        if context.is_empty() || n == 0 {
            return Err(Error::Validation(
                "greedy continuation needs a non-empty context and n >= 1".to_string(),
            ));
        }
        if context.len() + n > self.descriptor.context_window {
            return Err(Error::WindowExceeded {
                len: context.len() + n,
                window: self.descriptor.context_window,
            });
        }
        Ok(TokenSeq(self.lm.greedy_tokens(context.as_slice(), n)?))
    }
}
