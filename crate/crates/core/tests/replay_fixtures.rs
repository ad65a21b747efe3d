//! Replays recorded per-token behavior through the metrics pipeline and
//! checks that dataset summaries reproduce the bundled reference tables
//! cell for cell.

use std::collections::BTreeSet;

use leakaudit_core::backend::{ReplayBackend, TokenSeq};
use leakaudit_core::corpus::Document;
use leakaudit_core::fixtures;
use leakaudit_core::metrics::{
    ngram_accuracy, strided_nll, summarize, NGramConfig, StrideConfig,
};

const DOC_LEN: usize = 400;
const GRAM: usize = 5;
const POINTS: usize = 100;

fn replay_doc(id: &str, dataset: &str) -> Document {
    let content: String = (0..DOC_LEN)
        .map(|i| (b'a' + (i % 26) as u8) as char)
        .collect();
    Document {
        id: id.to_string(),
        dataset: dataset.to_string(),
        language: "java".to_string(),
        path: format!("{id}.java"),
        content,
        repo: None,
        commit: None,
        created_at: None,
    }
}

/// The deterministic trial placement for a single-window document: inclusive
/// linear spacing of POINTS starts over [1, t - n].
fn trial_starts() -> Vec<usize> {
    let (lo, hi) = (1usize, DOC_LEN - GRAM);
    (0..POINTS).map(|k| lo + k * (hi - lo) / (POINTS - 1)).collect()
}

/// Replay backend scripted to reproduce one table cell: constant per-token
/// log-probability `-nll`, and greedy hits at the first `matches` trial
/// starts.
fn cell_backend(doc: &Document, nll: f64, matches: usize) -> ReplayBackend {
    let gold = TokenSeq(doc.content.bytes().map(u32::from).collect());
    let logprobs = vec![-nll; gold.len() - 1];
    let match_starts: BTreeSet<usize> = trial_starts().into_iter().take(matches).collect();
    ReplayBackend::new(gold, logprobs, match_starts).unwrap()
}

fn configs() -> (StrideConfig, NGramConfig) {
    (
        StrideConfig::new(1 << 20, 512).unwrap(),
        NGramConfig {
            n: GRAM,
            points_per_stride: POINTS,
            seed: 0,
        },
    )
}

#[test]
fn replay_reproduces_flagship_cell() {
    // codegen-6b-multi on defects4j: NLL 0.15, 5-gram accuracy 0.82
    let (scfg, ncfg) = configs();
    let mut nlls = Vec::new();
    let mut ngrams = Vec::new();
    for i in 0..3 {
        let doc = replay_doc(&format!("d4j-{i}"), "defects4j");
        let backend = cell_backend(&doc, 0.15, 82);
        nlls.push(strided_nll(&doc, &backend, &scfg).unwrap());
        ngrams.push(ngram_accuracy(&doc, &backend, &scfg, &ncfg).unwrap());
    }
    assert_eq!(ngrams[0].trials.len(), POINTS);

    let summary = summarize("defects4j", "codegen-6b-multi", &nlls, &ngrams).unwrap();
    assert!((summary.mean_nll - 0.15).abs() < 1e-9, "nll {}", summary.mean_nll);
    assert_eq!(format!("{:.2}", summary.mean_nll), "0.15");
    assert_eq!(summary.mean_ngram.to_bits(), 0.82f64.to_bits());
    assert_eq!(summary.doc_count, 3);
}

#[test]
fn replay_reproduces_every_reference_cell() {
    let (scfg, ncfg) = configs();
    for cell in fixtures::summaries() {
        let doc = replay_doc(&format!("{}-{}", cell.model, cell.dataset), &cell.dataset);
        let matches = (cell.mean_ngram * POINTS as f64).round() as usize;
        let backend = cell_backend(&doc, cell.mean_nll, matches);

        let nll = strided_nll(&doc, &backend, &scfg).unwrap();
        let ngram = ngram_accuracy(&doc, &backend, &scfg, &ncfg).unwrap();
        let summary = summarize(&cell.dataset, &cell.model, &[nll], &[ngram]).unwrap();

        assert!(
            (summary.mean_nll - cell.mean_nll).abs() < 1e-9,
            "{} x {}: nll {} vs {}",
            cell.model,
            cell.dataset,
            summary.mean_nll,
            cell.mean_nll
        );
        assert_eq!(
            format!("{:.2}", summary.mean_nll),
            format!("{:.2}", cell.mean_nll),
            "{} x {} nll rendering",
            cell.model,
            cell.dataset
        );
        assert_eq!(
            summary.mean_ngram.to_bits(),
            cell.mean_ngram.to_bits(),
            "{} x {}: accuracy {} vs {}",
            cell.model,
            cell.dataset,
            summary.mean_ngram,
            cell.mean_ngram
        );
    }
}
