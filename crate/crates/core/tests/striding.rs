//! Striding exactness against a direct full-sequence oracle, window-coverage
//! accounting through the full pipeline, and the memorization-signal
//! property of the reference model.

use leakaudit_core::backend::{
    Backend, BackendDescriptor, ReferenceBackend, ScoredSequence, TokenSeq,
};
use leakaudit_core::corpus::{Corpus, Document};
use leakaudit_core::error::Result;
use leakaudit_core::metrics::{
    corpus_ngram, corpus_nll, ngram_accuracy, strided_nll, NGramConfig, StrideConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn doc_of(id: &str, content: &str) -> Document {
    Document {
        id: id.to_string(),
        dataset: "test".to_string(),
        language: "java".to_string(),
        path: format!("{id}.java"),
        content: content.to_string(),
        repo: None,
        commit: None,
        created_at: None,
    }
}

/// Random code-ish text: mostly fresh identifiers over a fixed byte
/// alphabet, salted with a few shared keywords.
fn synth_text(rng: &mut ChaCha8Rng, lines: usize) -> String {
    const KEYWORDS: &[&str] = &["int", "for", "while", "return", "if", "else"];
    let mut out = String::from("abcdefghijklmnopqrstuvwxyz\n");
    for _ in 0..lines {
        let n = rng.random_range(3..8);
        for k in 0..n {
            if k > 0 {
                out.push(' ');
            }
            if rng.random_range(0..10) < 3 {
                out.push_str(KEYWORDS[rng.random_range(0..KEYWORDS.len())]);
            } else {
                let len = rng.random_range(3..9);
                for _ in 0..len {
                    out.push((b'a' + rng.random_range(0..26u8)) as char);
                }
            }
        }
        out.push('\n');
    }
    out
}

fn synth_corpus(dataset: &str, seed: u64, files: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let documents = (0..files)
        .map(|i| {
            let lines = rng.random_range(6..14);
            doc_of(&format!("{dataset}-{i:03}"), &synth_text(&mut rng, lines))
        })
        .collect();
    Corpus::new(dataset, documents).unwrap()
}

#[test]
fn strided_equals_direct_when_document_fits() {
    let train = synth_corpus("train", 1, 10);
    let backend = ReferenceBackend::train_default(&train, 4096).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    for trial in 0..200 {
        let lines = rng.random_range(2..8);
        let content = synth_text(&mut rng, lines);
        let doc = doc_of(&format!("t{trial}"), &content);
        let tokens = backend.tokenize(&content).unwrap();
        let t = tokens.len();
        let window = t + rng.random_range(0..64);
        let stride = rng.random_range(1..=window);
        let cfg = StrideConfig::new(window, stride).unwrap();

        let result = strided_nll(&doc, &backend, &cfg).unwrap();

        // direct full-sequence oracle
        let scored = backend.score(&tokens).unwrap();
        let direct = -scored.logprobs.iter().sum::<f64>() / scored.logprobs.len() as f64;

        assert_eq!(result.counted, t - 1);
        assert!(
            (result.nll - direct).abs() < 1e-12,
            "trial {trial}: strided {} vs direct {direct}",
            result.nll
        );
    }
}

/// Backend whose token ids encode their global position: tokenize maps a
/// text of length t to ids 0..t, and each scored position contributes its
/// own token id to the loss. Summed loss then fingerprints exactly which
/// positions were counted.
struct PositionProbe {
    descriptor: BackendDescriptor,
}

impl PositionProbe {
    fn new(window: usize) -> Self {
        Self {
            descriptor: BackendDescriptor {
                name: "position-probe".to_string(),
                vocab_size: u32::MAX,
                context_window: window,
                family: "oracle".to_string(),
            },
        }
    }
}

impl Backend for PositionProbe {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Result<TokenSeq> {
        Ok(TokenSeq((0..text.len() as u32).collect()))
    }

    fn detokenize(&self, _tokens: &TokenSeq) -> Result<String> {
        unimplemented!("probe backend never detokenizes")
    }

    fn score(&self, tokens: &TokenSeq) -> Result<ScoredSequence> {
        let logprobs = tokens.as_slice()[1..]
            .iter()
            .map(|&id| -f64::from(id))
            .collect();
        ScoredSequence::new(tokens.clone(), logprobs)
    }

    fn greedy_continue(&self, _context: &TokenSeq, n: usize) -> Result<TokenSeq> {
        Ok(TokenSeq(vec![0; n]))
    }
}

#[test]
fn counted_positions_partition_for_long_documents() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..200 {
        let t = rng.random_range(10..1200usize);
        let window = rng.random_range(2..200usize);
        let stride = rng.random_range(1..=window);
        let backend = PositionProbe::new(window);
        let cfg = StrideConfig::new(window, stride).unwrap();
        let doc = doc_of(&format!("p{trial}"), &"x".repeat(t));

        let result = strided_nll(&doc, &backend, &cfg).unwrap();

        // token id at 1-indexed position p is p-1, so a perfect partition of
        // {2..t} sums to 1 + 2 + ... + (t-1)
        let expected_total = (t * (t - 1) / 2) as f64;
        assert_eq!(result.counted, t - 1, "t={t} W={window} S={stride}");
        assert_eq!(
            result.total_nll, expected_total,
            "t={t} W={window} S={stride}"
        );
    }
}

#[test]
fn memorization_gap_between_seen_and_unseen_corpora() {
    let corpus_a = synth_corpus("seen", 10, 12);
    let corpus_b = synth_corpus("unseen", 20, 12);
    let backend = ReferenceBackend::train_default(&corpus_a, 1024).unwrap();

    // every unseen byte must be in the trained inventory for scoring
    for d in corpus_b.documents() {
        for b in d.content.bytes() {
            assert!(backend.lm().contains(u32::from(b)), "byte {b} not trained");
        }
    }

    let scfg = StrideConfig::for_backend(backend.descriptor(), None).unwrap();
    let ncfg = NGramConfig::default();

    let nll_a = corpus_nll(&corpus_a, &backend, &scfg, 2).unwrap();
    let nll_b = corpus_nll(&corpus_b, &backend, &scfg, 2).unwrap();
    let ng_a = corpus_ngram(&corpus_a, &backend, &scfg, &ncfg, 2).unwrap();
    let ng_b = corpus_ngram(&corpus_b, &backend, &scfg, &ncfg, 2).unwrap();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_nll_a = mean(&nll_a.iter().map(|r| r.nll).collect::<Vec<_>>());
    let mean_nll_b = mean(&nll_b.iter().map(|r| r.nll).collect::<Vec<_>>());
    let mean_ng_a = mean(&ng_a.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let mean_ng_b = mean(&ng_b.iter().map(|r| r.accuracy).collect::<Vec<_>>());

    assert!(
        mean_nll_a < mean_nll_b - 0.5,
        "nll gap too small: seen {mean_nll_a}, unseen {mean_nll_b}"
    );
    assert!(
        mean_ng_a >= mean_ng_b + 0.3,
        "accuracy gap too small: seen {mean_ng_a}, unseen {mean_ng_b}"
    );
}

/// True when the order-5 context is unique in `bytes` at the trial start and
/// at every one of the n continuation steps; an order-5 model trained on
/// exactly this document must then continue verbatim. Contexts within the
/// first 4 bytes are anchored to the begin marker and unique by construction
/// for single-document training.
fn all_step_contexts_unique(bytes: &[u8], start: usize, n: usize) -> bool {
    (0..n).all(|k| {
        let pos = start + k;
        if pos < 4 {
            return true;
        }
        let ctx = &bytes[pos - 4..pos];
        bytes.windows(4).filter(|w| *w == ctx).count() == 1
    })
}

#[test]
fn trained_order_five_model_continues_unique_contexts() {
    let ncfg = NGramConfig::default();
    let scfg = StrideConfig::new(4096, 512).unwrap();

    // scan for a document whose trial contexts are all unique; the scan is
    // deterministic, so the chosen fixture never changes
    let corpus = (0..64u64)
        .map(|seed| synth_corpus("solo", seed, 1))
        .find(|corpus| {
            let doc = &corpus.documents()[0];
            let bytes = doc.content.as_bytes();
            let oracle = leakaudit_core::backend::EchoOracle::for_text(&doc.content);
            ngram_accuracy(doc, &oracle, &scfg, &ncfg)
                .map(|r| {
                    r.trials
                        .iter()
                        .all(|t| all_step_contexts_unique(bytes, t.start, ncfg.n))
                })
                .unwrap_or(false)
        })
        .expect("some synthetic document has all-unique trial contexts");

    let backend = ReferenceBackend::train_default(&corpus, 4096).unwrap();
    let report = ngram_accuracy(&corpus.documents()[0], &backend, &scfg, &ncfg).unwrap();
    for trial in &report.trials {
        assert!(
            trial.matched,
            "unique context at {} not continued verbatim",
            trial.start
        );
    }
    assert_eq!(report.accuracy, 1.0);
}

#[test]
fn parallel_scoring_matches_sequential() {
    let corpus = synth_corpus("par", 5, 8);
    let backend = ReferenceBackend::train_default(&corpus, 1024).unwrap();
    let scfg = StrideConfig::for_backend(backend.descriptor(), Some(64)).unwrap();
    let seq = corpus_nll(&corpus, &backend, &scfg, 1).unwrap();
    let par = corpus_nll(&corpus, &backend, &scfg, 8).unwrap();
    assert_eq!(seq, par);
}
