//! Per-document leakage signals: strided negative log-likelihood and n-gram
//! accuracy, plus per-dataset aggregation.
//!
//! Long documents are scored in overlapping windows. Windows begin at
//! 0, S, 2S, ... (capped so consecutive windows always overlap by at least
//! one token, which keeps every position scorable) and end at
//! min(begin + W, t). Only positions not covered by an earlier window are
//! counted, and global position 1 is never scored, so counted positions
//! partition {2..t} exactly. NLL divides by counted positions rather than t;
//! the two differ only for very short files.
//!
//! N-gram trials place `points_per_stride` starting points by inclusive
//! linear spacing over each window's fresh region, collapsing duplicate
//! placements. A gram must fit inside its window (s + n <= end); contexts
//! longer than the window allows are truncated to the most recent W - n
//! tokens.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendDescriptor, TokenSeq};
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

/// Windowing parameters: window size W (from the backend) and stride S.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StrideConfig {
    pub window: usize,
    pub stride: usize,
}

pub const DEFAULT_STRIDE: usize = 512;

impl StrideConfig {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window < 2 {
            return Err(Error::Validation(format!(
                "window must be at least 2, got {window}"
            )));
        }
        if stride == 0 || stride > window {
            return Err(Error::Validation(format!(
                "stride must satisfy 1 <= S <= W, got S={stride}, W={window}"
            )));
        }
        Ok(Self { window, stride })
    }

    /// Window from the backend descriptor, stride defaulting to 512.
    pub fn for_backend(descriptor: &BackendDescriptor, stride: Option<usize>) -> Result<Self> {
        let stride = stride
            .unwrap_or(DEFAULT_STRIDE)
            .min(descriptor.context_window);
        Self::new(descriptor.context_window, stride)
    }
}

/// One scoring window over a t-token document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    /// Token index range [begin, end).
    pub begin: usize,
    pub end: usize,
    /// First counted 1-indexed position (fresh region start, never below 2).
    pub count_from: usize,
}

/// The deterministic window sequence for a t-token document.
pub fn stride_plan(t: usize, cfg: &StrideConfig) -> Vec<Window> {
    let advance = cfg.stride.min(cfg.window - 1);
    let mut windows = Vec::new();
    let mut begin = 0usize;
    let mut prev_end = 0usize;
    loop {
        let end = (begin + cfg.window).min(t);
        windows.push(Window {
            begin,
            end,
            count_from: (prev_end + 1).max(2),
        });
        prev_end = end;
        if end == t {
            break;
        }
        begin += advance;
    }
    windows
}

/// Per-document summed negative log-probability over counted positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllResult {
    pub doc_id: String,
    /// Sum of -ln p over counted positions, in nats.
    pub total_nll: f64,
    /// Number of scored positions (t - 1 whenever t <= W).
    pub counted: usize,
    /// total_nll / counted.
    pub nll: f64,
}

fn attach_window(err: Error, window_idx: usize) -> Error {
    match err {
        Error::Transport {
            reason,
            attempts,
            retryable,
        } => Error::Transport {
            reason: format!("window {window_idx}: {reason}"),
            attempts,
            retryable,
        },
        other => other,
    }
}

/// Strided negative log-likelihood of one document.
pub fn strided_nll(doc: &Document, backend: &dyn Backend, cfg: &StrideConfig) -> Result<NllResult> {
    let tokens = backend.tokenize(&doc.content)?;
    let t = tokens.len();
    if t < 2 {
        return Err(Error::TooShort {
            doc_id: doc.id.clone(),
            reason: format!("{t} token(s); scoring needs at least 2"),
        });
    }
    let mut total_nll = 0.0f64;
    let mut counted = 0usize;
    for (w_idx, w) in stride_plan(t, cfg).iter().enumerate() {
        let slice = TokenSeq(tokens.as_slice()[w.begin..w.end].to_vec());
        let scored = backend
            .score(&slice)
            .map_err(|e| attach_window(e, w_idx))?;
        // logprobs[i] scores global position begin + i + 2
        let lo = w.count_from.saturating_sub(w.begin + 2);
        for lp in &scored.logprobs[lo..] {
            total_nll -= lp;
            counted += 1;
        }
    }
    Ok(NllResult {
        doc_id: doc.id.clone(),
        total_nll,
        counted,
        nll: total_nll / counted as f64,
    })
}

/// N-gram probe parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NGramConfig {
    pub n: usize,
    pub points_per_stride: usize,
    /// Recorded for provenance; placement is deterministic and seed-free.
    pub seed: u64,
}

impl Default for NGramConfig {
    fn default() -> Self {
        Self {
            n: 5,
            points_per_stride: 5,
            seed: 0,
        }
    }
}

impl NGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.points_per_stride == 0 {
            return Err(Error::Validation(
                "n and points_per_stride must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One greedy-continuation probe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    /// Token index where the gold gram begins; the context is everything
    /// before it.
    pub start: usize,
    pub gold: Vec<u32>,
    pub predicted: Vec<u32>,
    #[serde(rename = "match")]
    pub matched: bool,
}

/// Per-document n-gram accuracy with full trial detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramReport {
    pub doc_id: String,
    pub trials: Vec<Trial>,
    pub accuracy: f64,
}

/// Starting points for one window's fresh region: inclusive linear spacing
/// with duplicate collapse, or the midpoint in degenerate cases.
fn place_starts(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    if hi < lo {
        return Vec::new();
    }
    if points == 1 || hi == lo {
        return vec![lo + (hi - lo) / 2];
    }
    let mut starts = BTreeSet::new();
    for k in 0..points {
        starts.insert(lo + k * (hi - lo) / (points - 1));
    }
    starts.into_iter().collect()
}

/// N-gram accuracy of one document under greedy continuation.
pub fn ngram_accuracy(
    doc: &Document,
    backend: &dyn Backend,
    scfg: &StrideConfig,
    ncfg: &NGramConfig,
) -> Result<NGramReport> {
    ncfg.validate()?;
    if scfg.window <= ncfg.n {
        return Err(Error::Validation(format!(
            "window ({}) must exceed the gram length ({})",
            scfg.window, ncfg.n
        )));
    }
    let tokens = backend.tokenize(&doc.content)?;
    let t = tokens.len();
    if t < ncfg.n + 1 {
        return Err(Error::TooShort {
            doc_id: doc.id.clone(),
            reason: format!(
                "{t} token(s); {}-gram trials need at least {}",
                ncfg.n,
                ncfg.n + 1
            ),
        });
    }

    let max_context = scfg.window - ncfg.n;
    let mut trials = Vec::new();
    let mut prev_end = 0usize;
    for (w_idx, w) in stride_plan(t, scfg).iter().enumerate() {
        let lo = prev_end.max(1);
        prev_end = w.end;
        if w.end < ncfg.n {
            continue;
        }
        let hi = w.end - ncfg.n;
        for start in place_starts(lo, hi, ncfg.points_per_stride) {
            let context_from = start.saturating_sub(max_context);
            let context = TokenSeq(tokens.as_slice()[context_from..start].to_vec());
            let predicted = backend
                .greedy_continue(&context, ncfg.n)
                .map_err(|e| attach_window(e, w_idx))?;
            let gold = tokens.slice(start, ncfg.n);
            let matched = predicted == gold;
            trials.push(Trial {
                start,
                gold: gold.0,
                predicted: predicted.0,
                matched,
            });
        }
    }
    if trials.is_empty() {
        return Err(Error::TooShort {
            doc_id: doc.id.clone(),
            reason: "no admissible trial placement".to_string(),
        });
    }
    let matches = trials.iter().filter(|tr| tr.matched).count();
    let accuracy = matches as f64 / trials.len() as f64;
    Ok(NGramReport {
        doc_id: doc.id.clone(),
        trials,
        accuracy,
    })
}

/// Unweighted per-dataset averages of both signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub model: String,
    pub mean_nll: f64,
    pub mean_ngram: f64,
    pub doc_count: usize,
}

/// Average per-document results. Both means are unweighted across documents,
/// so file size never skews a dataset cell.
pub fn summarize(
    dataset: &str,
    model: &str,
    nll_results: &[NllResult],
    ngram_reports: &[NGramReport],
) -> Result<DatasetSummary> {
    if nll_results.is_empty() || ngram_reports.is_empty() {
        return Err(Error::Validation(
            "summarize needs at least one NLL result and one n-gram report".to_string(),
        ));
    }
    let mean_nll = nll_results.iter().map(|r| r.nll).sum::<f64>() / nll_results.len() as f64;
    let mean_ngram =
        ngram_reports.iter().map(|r| r.accuracy).sum::<f64>() / ngram_reports.len() as f64;
    let ids: BTreeSet<&str> = nll_results
        .iter()
        .map(|r| r.doc_id.as_str())
        .chain(ngram_reports.iter().map(|r| r.doc_id.as_str()))
        .collect();
    Ok(DatasetSummary {
        dataset: dataset.to_string(),
        model: model.to_string(),
        mean_nll,
        mean_ngram,
        doc_count: ids.len(),
    })
}

fn run_pool<T: Send>(parallelism: usize, job: impl FnOnce() -> Result<Vec<T>> + Send) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("worker pool: {e}")))?;
    pool.install(job)
}

/// Score every document of a corpus concurrently. Results follow corpus
/// order (sorted by id), so worker scheduling never changes output.
pub fn corpus_nll(
    corpus: &Corpus,
    backend: &dyn Backend,
    cfg: &StrideConfig,
    parallelism: usize,
) -> Result<Vec<NllResult>> {
    if corpus.is_empty() {
        return Err(Error::Validation("corpus has no documents".to_string()));
    }
    run_pool(parallelism, || {
        corpus
            .documents()
            .par_iter()
            .map(|doc| strided_nll(doc, backend, cfg))
            .collect()
    })
}

/// N-gram probe for every document of a corpus, in corpus order.
pub fn corpus_ngram(
    corpus: &Corpus,
    backend: &dyn Backend,
    scfg: &StrideConfig,
    ncfg: &NGramConfig,
    parallelism: usize,
) -> Result<Vec<NGramReport>> {
    if corpus.is_empty() {
        return Err(Error::Validation("corpus has no documents".to_string()));
    }
    run_pool(parallelism, || {
        corpus
            .documents()
            .par_iter()
            .map(|doc| ngram_accuracy(doc, backend, scfg, ncfg))
            .collect()
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for record in records {
        writeln!(file, "{}", serde_json::to_string(record)?)?;
    }
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::Ingestion {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Summaries as CSV: model, dataset, mean_nll, mean_ngram, doc_count.
pub fn summaries_to_csv(summaries: &[DatasetSummary]) -> String {
    let mut out = String::from("model,dataset,mean_nll,mean_ngram,doc_count\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.model, s.dataset, s.mean_nll, s.mean_ngram, s.doc_count
        ));
    }
    out
}

pub fn summaries_from_csv(text: &str) -> Result<Vec<DatasetSummary>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: "<summaries>".to_string(),
                line: idx + 1,
                reason: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                path: "<summaries>".to_string(),
                line: idx + 1,
                reason: format!("bad {what}: {s:?}"),
            })
        };
        out.push(DatasetSummary {
            model: fields[0].to_string(),
            dataset: fields[1].to_string(),
            mean_nll: parse_f(fields[2], "mean_nll")?,
            mean_ngram: parse_f(fields[3], "mean_ngram")?,
            doc_count: fields[4].parse().map_err(|_| Error::Parse {
                path: "<summaries>".to_string(),
                line: idx + 1,
                reason: format!("bad doc_count: {:?}", fields[4]),
            })?,
        });
    }
    Ok(out)
}
