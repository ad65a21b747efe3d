//! Repository membership against pretraining-dataset index snapshots.
//!
//! An index snapshot is a newline-delimited UTF-8 file of "org/name" entries,
//! one file per index version. Matching is case-insensitive and exact after
//! normalization; renamed repositories and forks are not resolved, but
//! same-name-different-owner index entries are surfaced per repo in the
//! detail rows. Counting is by distinct repository, never by file count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// One pretraining-index snapshot: a normalized repository set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipIndex {
    pub version: String,
    repos: BTreeSet<String>,
}

impl MembershipIndex {
    pub fn new(version: impl Into<String>, repos: impl IntoIterator<Item = String>) -> Self {
        Self {
            version: version.into(),
            repos: repos.into_iter().map(|r| normalize_repo(&r)).collect(),
        }
    }

    pub fn contains(&self, repo: &str) -> bool {
        self.repos.contains(&normalize_repo(repo))
    }

    pub fn len(&self) -> usize {
        self.repos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.repos.is_empty()
    }

    pub fn repos(&self) -> impl Iterator<Item = &str> {
        self.repos.iter().map(String::as_str)
    }
}

fn normalize_repo(repo: &str) -> String {
    repo.trim().to_lowercase()
}

/// Load one snapshot file; every non-blank line must be "org/name".
pub fn load_index(path: &Path, version: &str) -> Result<MembershipIndex> {
    let text = fs::read_to_string(path).map_err(|e| Error::Ingestion {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut repos = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('/') {
            Some((org, name)) if !org.is_empty() && !name.is_empty() => {
                repos.insert(normalize_repo(line));
            }
            _ => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: format!("expected \"org/name\", got {line:?}"),
                });
            }
        }
    }
    Ok(MembershipIndex {
        version: version.to_string(),
        repos,
    })
}

/// Membership percentage for one index version, held in exact tenths so the
/// one-decimal rendering never drifts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionRate {
    pub version: String,
    pub present: usize,
    /// Percentage in tenths, rounded half-up: 801 renders as "80.1".
    pub tenths: u64,
}

impl VersionRate {
    pub fn percent(&self) -> f64 {
        self.tenths as f64 / 10.0
    }

    pub fn render(&self) -> String {
        format!("{}.{}", self.tenths / 10, self.tenths % 10)
    }
}

/// Per-repository membership detail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoDetail {
    pub repo: String,
    /// (version, present) per index, in input order.
    pub present_in: Vec<(String, bool)>,
    /// Index entries sharing the repo's name part under a different owner;
    /// possible forks or renames left unmatched by exact matching.
    pub similar: Vec<String>,
}

/// Membership of one benchmark's repositories across index versions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub dataset: String,
    pub per_version: Vec<VersionRate>,
    pub details: Vec<RepoDetail>,
    pub distinct_repos: usize,
    /// Documents excluded for lacking a repo field.
    pub docs_without_repo: usize,
}

fn percent_tenths(present: usize, total: usize) -> u64 {
    // round half up in exact integer arithmetic: 1000 * present / total
    ((2000 * present as u64) + total as u64) / (2 * total as u64)
}

/// Check a corpus's distinct repositories against each index.
pub fn membership_rate(corpus: &Corpus, indexes: &[MembershipIndex]) -> Result<MembershipReport> {
    let mut repos: BTreeSet<String> = BTreeSet::new();
    let mut docs_without_repo = 0usize;
    for doc in corpus.documents() {
        match &doc.repo {
            Some(r) => {
                repos.insert(normalize_repo(r));
            }
            None => docs_without_repo += 1,
        }
    }
    if repos.is_empty() {
        return Err(Error::Validation(format!(
            "corpus {:?} has no repo-bearing documents",
            corpus.dataset
        )));
    }

    // name part -> owners, across all indexes, for similar-name surfacing
    let mut by_name: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for index in indexes {
        for entry in index.repos() {
            if let Some((_, name)) = entry.split_once('/') {
                by_name.entry(name).or_default().insert(entry);
            }
        }
    }

    let mut per_version = Vec::with_capacity(indexes.len());
    for index in indexes {
        let present = repos.iter().filter(|r| index.contains(r)).count();
        per_version.push(VersionRate {
            version: index.version.clone(),
            present,
            tenths: percent_tenths(present, repos.len()),
        });
    }

    let details = repos
        .iter()
        .map(|repo| {
            let present_in: Vec<(String, bool)> = indexes
                .iter()
                .map(|ix| (ix.version.clone(), ix.contains(repo)))
                .collect();
            let anywhere = present_in.iter().any(|(_, p)| *p);
            let similar = if anywhere {
                Vec::new()
            } else {
                repo.split_once('/')
                    .and_then(|(_, name)| by_name.get(name))
                    .map(|owners| {
                        owners
                            .iter()
                            .filter(|e| *e != repo)
                            .map(|e| e.to_string())
                            .collect()
                    })
                    .unwrap_or_default()
            };
            RepoDetail {
                repo: repo.clone(),
                present_in,
                similar,
            }
        })
        .collect();

    Ok(MembershipReport {
        dataset: corpus.dataset.clone(),
        per_version,
        details,
        distinct_repos: repos.len(),
        docs_without_repo,
    })
}

/// Benchmark-per-row CSV with one percentage column per index version.
pub fn reports_to_csv(reports: &[MembershipReport]) -> Result<String> {
    let Some(first) = reports.first() else {
        return Err(Error::Validation("no membership reports".to_string()));
    };
    let versions: Vec<&str> = first
        .per_version
        .iter()
        .map(|v| v.version.as_str())
        .collect();
    for report in reports {
        let these: Vec<&str> = report
            .per_version
            .iter()
            .map(|v| v.version.as_str())
            .collect();
        if these != versions {
            return Err(Error::Validation(format!(
                "report for {:?} covers versions {these:?}, expected {versions:?}",
                report.dataset
            )));
        }
    }
    let mut out = String::from("benchmark");
    for v in &versions {
        out.push_str(&format!(",{v} (%)"));
    }
    out.push('\n');
    for report in reports {
        out.push_str(&report.dataset);
        for rate in &report.per_version {
            out.push_str(&format!(",{}", rate.render()));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Per-repo detail CSV across all reports.
pub fn details_to_csv(reports: &[MembershipReport]) -> Result<String> {
    let Some(first) = reports.first() else {
        return Err(Error::Validation("no membership reports".to_string()));
    };
    let mut out = String::from("benchmark,repo");
    for rate in &first.per_version {
        out.push_str(&format!(",{}", rate.version));
    }
    out.push_str(",similar\n");
    for report in reports {
        for detail in &report.details {
            out.push_str(&format!("{},{}", report.dataset, detail.repo));
            for (_, present) in &detail.present_in {
                out.push_str(if *present { ",yes" } else { ",no" });
            }
            out.push_str(&format!(",{}\n", detail.similar.join(" ")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn doc_with_repo(id: &str, repo: Option<&str>) -> Document {
        Document {
            id: id.to_string(),
            dataset: "bench".to_string(),
            language: "java".to_string(),
            path: format!("{id}.java"),
            content: "x".to_string(),
            repo: repo.map(String::from),
            commit: None,
            created_at: None,
        }
    }

    #[test]
    fn load_index_normalizes_case() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v1.txt");
        fs::write(&path, "Apache/Commons-Lang\n").unwrap();
        let ix = load_index(&path, "v1.0").unwrap();
        assert!(ix.contains("apache/commons-lang"));
        assert!(ix.contains("APACHE/COMMONS-LANG"));
    }

    #[test]
    fn load_index_dedupes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v1.txt");
        fs::write(&path, "a/b\nA/B\na/b\n").unwrap();
        assert_eq!(load_index(&path, "v1.0").unwrap().len(), 1);
    }

    #[test]
    fn load_index_empty_file_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v1.txt");
        fs::write(&path, "").unwrap();
        assert!(load_index(&path, "v1.0").unwrap().is_empty());
    }

    #[test]
    fn load_index_malformed_line_reports_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v1.txt");
        fs::write(&path, "a/b\nnot-a-repo\n").unwrap();
        match load_index(&path, "v1.0").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn eight_of_ten_is_eighty() {
        let docs: Vec<Document> = (0..10)
            .map(|i| doc_with_repo(&format!("d{i}"), Some(&format!("org/repo{i}"))))
            .collect();
        let corpus = Corpus::new("bench", docs).unwrap();
        let ix = MembershipIndex::new(
            "v1.0",
            (0..8).map(|i| format!("org/repo{i}")),
        );
        let report = membership_rate(&corpus, &[ix]).unwrap();
        assert_eq!(report.per_version[0].render(), "80.0");
        assert_eq!(report.distinct_repos, 10);
    }

    #[test]
    fn empty_index_is_zero_percent() {
        let corpus = Corpus::new(
            "bench",
            vec![doc_with_repo("d0", Some("org/x"))],
        )
        .unwrap();
        let ix = MembershipIndex::new("v1.0", Vec::<String>::new());
        let report = membership_rate(&corpus, &[ix]).unwrap();
        assert_eq!(report.per_version[0].render(), "0.0");
    }

    #[test]
    fn counts_distinct_repos_not_files() {
        let corpus = Corpus::new(
            "bench",
            vec![
                doc_with_repo("d0", Some("org/x")),
                doc_with_repo("d1", Some("org/x")),
                doc_with_repo("d2", Some("org/y")),
                doc_with_repo("d3", None),
            ],
        )
        .unwrap();
        let ix = MembershipIndex::new("v1.0", vec!["org/x".to_string()]);
        let report = membership_rate(&corpus, &[ix]).unwrap();
        assert_eq!(report.distinct_repos, 2);
        assert_eq!(report.docs_without_repo, 1);
        assert_eq!(report.per_version[0].render(), "50.0");
    }

    #[test]
    fn no_repo_bearing_documents_errors() {
        let corpus = Corpus::new("bench", vec![doc_with_repo("d0", None)]).unwrap();
        let ix = MembershipIndex::new("v1.0", Vec::<String>::new());
        assert!(membership_rate(&corpus, &[ix]).is_err());
    }

    #[test]
    fn adding_index_entries_never_decreases_percentage() {
        let docs: Vec<Document> = (0..7)
            .map(|i| doc_with_repo(&format!("d{i}"), Some(&format!("org/r{i}"))))
            .collect();
        let corpus = Corpus::new("bench", docs).unwrap();
        let mut entries: Vec<String> = vec!["other/unrelated".to_string()];
        let mut last = 0u64;
        for i in 0..7 {
            entries.push(format!("org/r{i}"));
            let ix = MembershipIndex::new("v", entries.clone());
            let report = membership_rate(&corpus, &[ix]).unwrap();
            let tenths = report.per_version[0].tenths;
            assert!(tenths >= last);
            last = tenths;
        }
        assert_eq!(last, 1000);
    }

    #[test]
    fn similar_names_surfaced_for_unmatched_repos() {
        let corpus = Corpus::new(
            "bench",
            vec![doc_with_repo("d0", Some("neworg/widget"))],
        )
        .unwrap();
        let ix = MembershipIndex::new("v1.0", vec!["oldorg/widget".to_string()]);
        let report = membership_rate(&corpus, &[ix]).unwrap();
        assert_eq!(report.details[0].similar, vec!["oldorg/widget".to_string()]);
    }

    #[test]
    fn rounding_is_half_up_to_one_decimal() {
        assert_eq!(percent_tenths(1, 16), 63); // 6.25 -> 6.3
        assert_eq!(percent_tenths(16, 17), 941); // 94.117 -> 94.1
        assert_eq!(percent_tenths(1, 3), 333);
        assert_eq!(percent_tenths(2, 3), 667);
        assert_eq!(percent_tenths(1, 1), 1000);
    }
}
