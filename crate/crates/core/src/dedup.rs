//! Near-duplicate detection and removal via shingling, MinHash signatures,
//! and LSH candidate generation.
//!
//! "Overlap" between two documents is defined as estimated Jaccard similarity
//! over windows of `w` whitespace-delimited tokens; banding generates
//! candidate pairs and the similarity threshold is the verify step. Survivor
//! choice inside a duplicate component delegates to the corpus keep-oldest
//! policy. Removal is applied at file granularity; reports carry a
//! repository-level summary alongside.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{keep_oldest, Corpus};
use crate::error::{Error, Result};

/// splitmix64 finalizer; bijective on u64.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over bytes with a mixed seed, finalized for avalanche.
#[inline]
fn hash_bytes(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ mix64(seed);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// The j-th permutation-style hash: a keyed bijection of u64 derived from
/// (seed, j). Exposed so test oracles can recompute minima independently.
#[inline]
pub fn permutation_hash(seed: u64, j: usize, x: u64) -> u64 {
    mix64(x ^ mix64(seed ^ mix64(j as u64 + 1)))
}

/// Set of hashed w-token windows of a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    pub shingles: HashSet<u64>,
    pub w: usize,
}

impl ShingleSet {
    /// Exact Jaccard similarity against another set.
    pub fn jaccard(&self, other: &ShingleSet) -> f64 {
        let inter = self.shingles.intersection(&other.shingles).count();
        let union = self.shingles.len() + other.shingles.len() - inter;
        if union == 0 {
            return 1.0;
        }
        inter as f64 / union as f64
    }
}

/// MinHash signature: per-permutation minima over a shingle set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub mins: Vec<u64>,
    pub k: usize,
    pub seed: u64,
}

/// Deduplication parameters. Defaults: 0.85 overlap threshold, 128
/// permutations in 32 bands of 4 rows (S-curve midpoint near 0.84), 8-token
/// shingles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DedupConfig {
    pub overlap_threshold: f64,
    pub k: usize,
    pub bands: usize,
    pub rows: usize,
    pub w: usize,
    pub seed: u64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            overlap_threshold: 0.85,
            k: 128,
            bands: 32,
            rows: 4,
            w: 8,
            seed: 0,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bands * self.rows != self.k {
            return Err(Error::Validation(format!(
                "bands ({}) x rows ({}) must equal k ({})",
                self.bands, self.rows, self.k
            )));
        }
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0) {
            return Err(Error::Validation(format!(
                "overlap_threshold must be in (0, 1], got {}",
                self.overlap_threshold
            )));
        }
        if self.w == 0 {
            return Err(Error::Validation("shingle width must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Hash every contiguous window of `w` whitespace-delimited tokens. Documents
/// shorter than `w` tokens yield a single shingle over the whole token run.
pub fn shingle(content: &str, w: usize) -> Result<ShingleSet> {
    if w == 0 {
        return Err(Error::Validation("shingle width must be >= 1".to_string()));
    }
    let tokens: Vec<&str> = content.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::Validation(
            "cannot shingle empty content".to_string(),
        ));
    }
    let mut shingles = HashSet::new();
    if tokens.len() < w {
        shingles.insert(hash_bytes(tokens.join(" ").as_bytes(), 0));
    } else {
        for window in tokens.windows(w) {
            shingles.insert(hash_bytes(window.join(" ").as_bytes(), 0));
        }
    }
    Ok(ShingleSet { shingles, w })
}

/// MinHash signature of a shingle set: `mins[j]` is the minimum of the j-th
/// permutation hash over the set.
pub fn signature(shingles: &ShingleSet, k: usize, seed: u64) -> Result<Signature> {
    if shingles.shingles.is_empty() {
        return Err(Error::Validation(
            "cannot sign an empty shingle set".to_string(),
        ));
    }
    let mins = (0..k)
        .map(|j| {
            shingles
                .shingles
                .iter()
                .map(|&x| permutation_hash(seed, j, x))
                .min()
                .expect("non-empty set")
        })
        .collect();
    Ok(Signature { mins, k, seed })
}

/// Fraction of signature positions that agree; estimates Jaccard similarity.
pub fn estimate_jaccard(a: &Signature, b: &Signature) -> Result<f64> {
    if a.k != b.k || a.seed != b.seed {
        return Err(Error::Comparability(format!(
            "signatures disagree on (k, seed): ({}, {}) vs ({}, {})",
            a.k, a.seed, b.k, b.seed
        )));
    }
    let matches = a
        .mins
        .iter()
        .zip(&b.mins)
        .filter(|(x, y)| x == y)
        .count();
    Ok(matches as f64 / a.k as f64)
}

fn band_bucket(sig: &Signature, band: usize, rows: usize) -> u64 {
    let slice = &sig.mins[band * rows..(band + 1) * rows];
    let mut bytes = Vec::with_capacity(rows * 8);
    for v in slice {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    hash_bytes(&bytes, band as u64 + 1)
}

/// Every id pair that collides in at least one LSH band and verifies at or
/// above the overlap threshold. Pairs are returned ordered (smaller id first).
pub fn find_near_duplicates(
    signatures: &[(String, Signature)],
    cfg: &DedupConfig,
) -> Result<BTreeSet<(String, String)>> {
    cfg.validate()?;
    if let Some((_, first)) = signatures.first() {
        for (id, sig) in signatures {
            if sig.k != first.k || sig.seed != first.seed {
                return Err(Error::Comparability(format!(
                    "signature for {id:?} disagrees on (k, seed)"
                )));
            }
        }
        if first.k != cfg.k {
            return Err(Error::Validation(format!(
                "signatures have k={}, config expects k={}",
                first.k, cfg.k
            )));
        }
    }

    let mut candidates: BTreeSet<(usize, usize)> = BTreeSet::new();
    for band in 0..cfg.bands {
        let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
        for (idx, (_, sig)) in signatures.iter().enumerate() {
            buckets
                .entry(band_bucket(sig, band, cfg.rows))
                .or_default()
                .push(idx);
        }
        for members in buckets.values() {
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    candidates.insert((members[i].min(members[j]), members[i].max(members[j])));
                }
            }
        }
    }

    let mut pairs = BTreeSet::new();
    for (i, j) in candidates {
        let sim = estimate_jaccard(&signatures[i].1, &signatures[j].1)?;
        if sim >= cfg.overlap_threshold {
            let (a, b) = (&signatures[i].0, &signatures[j].0);
            let pair = if a <= b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            };
            pairs.insert(pair);
        }
    }
    Ok(pairs)
}

fn corpus_signatures(corpus: &Corpus, cfg: &DedupConfig) -> Result<Vec<(String, Signature)>> {
    corpus
        .documents()
        .par_iter()
        .map(|doc| {
            let sh = shingle(&doc.content, cfg.w)?;
            Ok((doc.id.clone(), signature(&sh, cfg.k, cfg.seed)?))
        })
        .collect()
}

/// Disjoint-set forest over document indices.
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Outcome detail for an overlap-filter or cross-filter pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DedupReport {
    /// Duplicate components with more than one member, each sorted by id.
    pub components: Vec<Vec<String>>,
    /// Ids removed, sorted.
    pub removed: Vec<String>,
    /// Removed/kept file counts per repository ("(none)" when absent).
    pub repo_summary: BTreeMap<String, RepoCounts>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RepoCounts {
    pub kept: usize,
    pub removed: usize,
}

fn repo_summary(corpus: &Corpus, removed: &BTreeSet<String>) -> BTreeMap<String, RepoCounts> {
    let mut summary: BTreeMap<String, RepoCounts> = BTreeMap::new();
    for doc in corpus.documents() {
        let repo = doc.repo.clone().unwrap_or_else(|| "(none)".to_string());
        let counts = summary.entry(repo).or_default();
        if removed.contains(&doc.id) {
            counts.removed += 1;
        } else {
            counts.kept += 1;
        }
    }
    summary
}

/// Remove near-duplicates within a corpus, keeping one document per duplicate
/// component (earliest `created_at`, ties by smallest id).
pub fn apply_overlap_filter(corpus: &Corpus, cfg: &DedupConfig) -> Result<Corpus> {
    apply_overlap_filter_detailed(corpus, cfg).map(|(c, _)| c)
}

/// As [`apply_overlap_filter`], also returning component and repository detail.
pub fn apply_overlap_filter_detailed(
    corpus: &Corpus,
    cfg: &DedupConfig,
) -> Result<(Corpus, DedupReport)> {
    if corpus.is_empty() {
        return Err(Error::Validation(
            "cannot filter an empty corpus".to_string(),
        ));
    }
    let signatures = corpus_signatures(corpus, cfg)?;
    let pairs = find_near_duplicates(&signatures, cfg)?;

    let index: HashMap<&str, usize> = signatures
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (id.as_str(), i))
        .collect();
    let mut uf = UnionFind::new(signatures.len());
    for (a, b) in &pairs {
        uf.union(index[a.as_str()], index[b.as_str()]);
    }

    let mut components: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, (id, _)) in signatures.iter().enumerate() {
        components.entry(uf.find(i)).or_default().insert(id.clone());
    }
    let groups: Vec<BTreeSet<String>> = components
        .into_values()
        .filter(|g| g.len() > 1)
        .collect();

    let filtered = keep_oldest(corpus, &groups)?;
    let removed: BTreeSet<String> = corpus
        .documents()
        .iter()
        .filter(|d| !filtered.contains(&d.id))
        .map(|d| d.id.clone())
        .collect();
    let report = DedupReport {
        components: groups
            .iter()
            .map(|g| g.iter().cloned().collect())
            .collect(),
        removed: removed.iter().cloned().collect(),
        repo_summary: repo_summary(corpus, &removed),
    };
    Ok((filtered, report))
}

/// Remove from `new_corpus` every document whose estimated overlap with any
/// reference document is at or above the threshold. The reference is untouched.
pub fn cross_filter(new_corpus: &Corpus, reference: &Corpus, cfg: &DedupConfig) -> Result<Corpus> {
    cross_filter_detailed(new_corpus, reference, cfg).map(|(c, _)| c)
}

/// As [`cross_filter`], also returning removal detail.
pub fn cross_filter_detailed(
    new_corpus: &Corpus,
    reference: &Corpus,
    cfg: &DedupConfig,
) -> Result<(Corpus, DedupReport)> {
    if new_corpus.is_empty() || reference.is_empty() {
        return Err(Error::Validation(
            "cross_filter requires non-empty corpora".to_string(),
        ));
    }
    cfg.validate()?;
    let new_sigs = corpus_signatures(new_corpus, cfg)?;
    let ref_sigs = corpus_signatures(reference, cfg)?;

    let mut removed: BTreeSet<String> = BTreeSet::new();
    for band in 0..cfg.bands {
        let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
        for (idx, (_, sig)) in ref_sigs.iter().enumerate() {
            buckets
                .entry(band_bucket(sig, band, cfg.rows))
                .or_default()
                .push(idx);
        }
        for (id, sig) in &new_sigs {
            if removed.contains(id) {
                continue;
            }
            if let Some(members) = buckets.get(&band_bucket(sig, band, cfg.rows)) {
                for &ref_idx in members {
                    if estimate_jaccard(sig, &ref_sigs[ref_idx].1)? >= cfg.overlap_threshold {
                        removed.insert(id.clone());
                        break;
                    }
                }
            }
        }
    }

    let kept: BTreeSet<String> = new_corpus
        .documents()
        .iter()
        .filter(|d| !removed.contains(&d.id))
        .map(|d| d.id.clone())
        .collect();
    let report = DedupReport {
        components: Vec::new(),
        removed: removed.iter().cloned().collect(),
        repo_summary: repo_summary(new_corpus, &removed),
    };
    Ok((new_corpus.retain_ids(&kept), report))
}

#[derive(Debug, Serialize, Deserialize)]
struct SignatureCacheEntry {
    id: String,
    k: usize,
    seed: u64,
    mins: Vec<u64>,
}

/// Persist signatures as JSONL so later runs can skip recomputation.
pub fn write_signature_cache(path: &Path, signatures: &[(String, Signature)]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for (id, sig) in signatures {
        let entry = SignatureCacheEntry {
            id: id.clone(),
            k: sig.k,
            seed: sig.seed,
            mins: sig.mins.clone(),
        };
        writeln!(file, "{}", serde_json::to_string(&entry)?)?;
    }
    Ok(())
}

/// Load signatures written by [`write_signature_cache`].
pub fn read_signature_cache(path: &Path) -> Result<Vec<(String, Signature)>> {
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
        let entry: SignatureCacheEntry =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                reason: e.to_string(),
            })?;
        out.push((
            entry.id,
            Signature {
                mins: entry.mins,
                k: entry.k,
                seed: entry.seed,
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shingle_window_count() {
        let s = shingle("a b c", 2).unwrap();
        assert_eq!(s.shingles.len(), 2);
    }

    #[test]
    fn shingle_short_document_single_hash() {
        let s = shingle("a", 3).unwrap();
        assert_eq!(s.shingles.len(), 1);
    }

    #[test]
    fn shingle_identical_texts_identical_sets() {
        let a = shingle("x y z w v u t s r", 8).unwrap();
        let b = shingle("x y z w v u t s r", 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shingle_empty_content_errors() {
        assert!(shingle("", 4).is_err());
        assert!(shingle("   \n\t", 4).is_err());
    }

    #[test]
    fn signature_of_equal_sets_equal() {
        let a = shingle("one two three four five six", 3).unwrap();
        let b = shingle("one two three four five six", 3).unwrap();
        assert_eq!(
            signature(&a, 64, 9).unwrap(),
            signature(&b, 64, 9).unwrap()
        );
    }

    #[test]
    fn signature_singleton_is_permutation_hash() {
        let mut set = HashSet::new();
        set.insert(123456789u64);
        let s = ShingleSet { shingles: set, w: 1 };
        let sig = signature(&s, 16, 42).unwrap();
        for (j, &m) in sig.mins.iter().enumerate() {
            assert_eq!(m, permutation_hash(42, j, 123456789));
        }
    }

    #[test]
    fn signature_empty_set_errors() {
        let s = ShingleSet {
            shingles: HashSet::new(),
            w: 1,
        };
        assert!(signature(&s, 8, 0).is_err());
    }

    #[test]
    fn estimate_identical_sets_is_one() {
        let a = shingle("p q r s t u v w x y", 4).unwrap();
        let sig_a = signature(&a, 128, 7).unwrap();
        assert_eq!(estimate_jaccard(&sig_a, &sig_a).unwrap(), 1.0);
    }

    #[test]
    fn estimate_mismatched_params_errors() {
        let a = shingle("p q r", 2).unwrap();
        let s1 = signature(&a, 64, 1).unwrap();
        let s2 = signature(&a, 64, 2).unwrap();
        let s3 = signature(&a, 32, 1).unwrap();
        assert!(estimate_jaccard(&s1, &s2).is_err());
        assert!(estimate_jaccard(&s1, &s3).is_err());
    }

    #[test]
    fn find_near_duplicates_identical_documents() {
        let text = "the quick brown fox jumps over the lazy dog again and again";
        let cfg = DedupConfig::default();
        let sig_a = signature(&shingle(text, cfg.w).unwrap(), cfg.k, cfg.seed).unwrap();
        let sig_b = sig_a.clone();
        let pairs = find_near_duplicates(
            &[("a".to_string(), sig_a), ("b".to_string(), sig_b)],
            &cfg,
        )
        .unwrap();
        assert!(pairs.contains(&("a".to_string(), "b".to_string())));
    }

    #[test]
    fn find_near_duplicates_config_violation() {
        let cfg = DedupConfig {
            bands: 5,
            rows: 5,
            k: 128,
            ..DedupConfig::default()
        };
        assert!(find_near_duplicates(&[], &cfg).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sigs.jsonl");
        let sh = shingle("alpha beta gamma delta epsilon zeta", 3).unwrap();
        let sigs = vec![("d1".to_string(), signature(&sh, 32, 5).unwrap())];
        write_signature_cache(&path, &sigs).unwrap();
        assert_eq!(read_signature_cache(&path).unwrap(), sigs);
    }
}
