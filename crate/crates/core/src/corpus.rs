//! Corpus ingestion: benchmark ground-truth files and mined repository files
//! under one provenance-tagged document model.
//!
//! A corpus is loaded from a JSONL manifest (one entry per line) whose `path`
//! fields resolve relative to a declared root. Documents are immutable after
//! load and a `Corpus` is safe to share read-only across workers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One ground-truth or mined source file with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// Unique within a corpus.
    pub id: String,
    /// Dataset label, e.g. "defects4j".
    pub dataset: String,
    /// Source language tag, e.g. "java".
    pub language: String,
    /// Path relative to the manifest root.
    pub path: String,
    /// UTF-8 file content.
    pub content: String,
    /// Originating repository as "org/name", when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo: Option<String>,
    /// Commit hex string, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commit: Option<String>,
    /// Creation date, when known. Documents without a date sort as newest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<NaiveDate>,
}

impl Document {
    /// Age key for the keep-oldest policy: known dates first (earliest wins),
    /// undated documents last, ties broken by lexicographically smallest id.
    pub fn age_key(&self) -> (NaiveDate, &str) {
        (
            self.created_at.unwrap_or(NaiveDate::MAX),
            self.id.as_str(),
        )
    }
}

/// One manifest line. `content` is loaded from `path` at ingestion time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub dataset: String,
    pub language: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<NaiveDate>,
}

/// An ordered document collection. Documents are kept sorted by id so every
/// downstream aggregation iterates in a stable order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub dataset: String,
    documents: Vec<Document>,
}

impl Corpus {
    /// Build a corpus from documents, sorting by id and rejecting duplicates.
    pub fn new(dataset: impl Into<String>, mut documents: Vec<Document>) -> Result<Self> {
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in documents.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Validation(format!(
                    "duplicate document id {:?}",
                    pair[0].id
                )));
            }
        }
        Ok(Self {
            dataset: dataset.into(),
            documents,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    /// Documents retained, preserving sorted order.
    pub fn retain_ids(&self, keep: &BTreeSet<String>) -> Corpus {
        Corpus {
            dataset: self.dataset.clone(),
            documents: self
                .documents
                .iter()
                .filter(|d| keep.contains(&d.id))
                .cloned()
                .collect(),
        }
    }

    /// Distinct languages present, in sorted order.
    pub fn languages(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.documents.iter().map(|d| d.language.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }
}

/// Load a corpus from a JSONL manifest. Each entry's `path` must resolve under
/// `root` to a non-empty UTF-8 file.
pub fn load_manifest(manifest_path: &Path, root: &Path) -> Result<Corpus> {
    let file = fs::File::open(manifest_path).map_err(|e| Error::Ingestion {
        path: manifest_path.display().to_string(),
        reason: e.to_string(),
    })?;
    let reader = BufReader::new(file);

    let mut dataset: Option<String> = None;
    let mut documents = Vec::new();
    let mut seen_ids = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: manifest_path.display().to_string(),
                line: line_no,
                reason: e.to_string(),
            })?;
        if !seen_ids.insert(entry.id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate document id {:?} at {}:{}",
                entry.id,
                manifest_path.display(),
                line_no
            )));
        }
        let file_path = root.join(&entry.path);
        let bytes = fs::read(&file_path).map_err(|e| Error::Ingestion {
            path: entry.path.clone(),
            reason: e.to_string(),
        })?;
        // Non-UTF-8 files are rejected rather than lossily transcoded so that
        // token counts stay reproducible.
        let content = String::from_utf8(bytes).map_err(|_| Error::Ingestion {
            path: entry.path.clone(),
            reason: "file is not valid UTF-8".to_string(),
        })?;
        if content.is_empty() {
            return Err(Error::Validation(format!(
                "document {:?} has empty content ({})",
                entry.id, entry.path
            )));
        }
        dataset.get_or_insert_with(|| entry.dataset.clone());
        documents.push(Document {
            id: entry.id,
            dataset: entry.dataset,
            language: entry.language,
            path: entry.path,
            content,
            repo: entry.repo,
            commit: entry.commit,
            created_at: entry.created_at,
        });
    }

    Corpus::new(dataset.unwrap_or_default(), documents)
}

/// Resolve duplicate groups by keeping exactly one document per group: the one
/// with the earliest `created_at`, ties broken by smallest id. Undated
/// documents sort as newest. Documents outside all groups are untouched.
pub fn keep_oldest(corpus: &Corpus, duplicate_groups: &[BTreeSet<String>]) -> Result<Corpus> {
    let mut drop: BTreeSet<String> = BTreeSet::new();
    for group in duplicate_groups {
        let mut members = Vec::with_capacity(group.len());
        for id in group {
            let doc = corpus.get(id).ok_or_else(|| {
                Error::Validation(format!("duplicate group references unknown id {:?}", id))
            })?;
            members.push(doc);
        }
        if members.is_empty() {
            continue;
        }
        let keep = members
            .iter()
            .min_by_key(|d| d.age_key())
            .expect("non-empty group")
            .id
            .clone();
        for doc in members {
            if doc.id != keep {
                drop.insert(doc.id.clone());
            }
        }
    }
    let kept: BTreeSet<String> = corpus
        .documents()
        .iter()
        .filter(|d| !drop.contains(&d.id))
        .map(|d| d.id.clone())
        .collect();
    Ok(corpus.retain_ids(&kept))
}

/// Draw up to `n_per_language` documents per language without replacement,
/// deterministically for a given (corpus, n, seed).
pub fn sample(corpus: &Corpus, n_per_language: usize, seed: u64) -> Result<Corpus> {
    if n_per_language == 0 {
        return Err(Error::Validation(
            "n_per_language must be at least 1".to_string(),
        ));
    }
    let mut by_language: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
    for doc in corpus.documents() {
        by_language.entry(doc.language.as_str()).or_default().push(doc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for (_language, docs) in by_language {
        let mut indices: Vec<usize> = (0..docs.len()).collect();
        indices.shuffle(&mut rng);
        indices.truncate(n_per_language.min(docs.len()));
        for i in indices {
            picked.push(docs[i].clone());
        }
    }
    Corpus::new(corpus.dataset.clone(), picked)
}
