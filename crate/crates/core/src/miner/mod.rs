//! Repository mining against a code-hosting REST API: date/star/language
//! filtered search plus whole-archive file fetching, with client-side rate
//! limiting and recorded-fixture replay.
//!
//! Endpoints (GitHub-compatible search shape, JSON archive listing):
//!   GET {api}/search/repositories?q=...&per_page=..&page=N
//!       -> {"total_count": int, "items": [{"full_name", "stargazers_count",
//!           "created_at", "language", "default_branch"}, ...]}
//!   GET {api}/repos/{org}/{name}/archive?ref={branch}
//!       -> {"commit": str, "files": [{"path", "content",
//!           "encoding": "utf-8"|"base64"}, ...]}
//!
//! Language is filtered twice, per the host's label at search time and per
//! file extension at fetch time; both counts are reported. Star counts are a
//! point-in-time snapshot. The search loop is sequential and cursor-ordered;
//! file fetches may run concurrently behind one shared rate limiter.

mod rate_limit;
mod transport;

pub use rate_limit::{Clock, RateLimiter, SystemClock, TestClock};
pub use transport::{FixtureTransport, HttpResponse, LiveTransport, Transport};

use std::collections::BTreeSet;
use std::time::Duration;

use base64::Engine;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

/// Mining filters and client behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinerConfig {
    pub languages: BTreeSet<String>,
    pub min_stars: u64,
    pub created_from: NaiveDate,
    pub created_to: NaiveDate,
    /// `None` means uncapped.
    pub max_repos: Option<usize>,
    pub api_base: String,
    /// Bearer token, typically injected from an environment variable.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auth_token: Option<String>,
    /// Requests per rolling hour.
    pub rate_limit_per_hour: usize,
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_per_page")]
    pub per_page: usize,
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_per_page() -> usize {
    100
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.created_from > self.created_to {
            return Err(Error::Validation(format!(
                "created_from ({}) is after created_to ({})",
                self.created_from, self.created_to
            )));
        }
        if self.languages.is_empty() {
            return Err(Error::Validation("no languages configured".to_string()));
        }
        Ok(())
    }
}

/// One repository satisfying the configured filters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoRecord {
    pub full_name: String,
    pub stars: u64,
    pub created_at: NaiveDate,
    pub language: String,
    pub default_branch: String,
}

#[derive(Debug, Deserialize)]
struct SearchPage {
    #[allow(dead_code)]
    total_count: u64,
    items: Vec<SearchItem>,
}

#[derive(Debug, Deserialize)]
struct SearchItem {
    full_name: String,
    stargazers_count: u64,
    created_at: String,
    language: Option<String>,
    #[serde(default = "default_branch")]
    default_branch: String,
}

fn default_branch() -> String {
    "main".to_string()
}

/// Resumable mining position: completed pages are never re-requested and
/// `seen` suppresses duplicate records across a resume.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MiningCursor {
    pub language_idx: usize,
    pub page: usize,
    pub seen: BTreeSet<String>,
    pub records: Vec<RepoRecord>,
}

fn parse_created_at(raw: &str) -> Option<NaiveDate> {
    raw.get(..10).and_then(|d| d.parse().ok())
}

/// GET with throttling and jittered exponential backoff on 403/429/5xx.
fn fetch_with_retry(
    transport: &dyn Transport,
    limiter: &RateLimiter,
    clock: &dyn Clock,
    cfg: &MinerConfig,
    url: &str,
) -> Result<HttpResponse> {
    let mut last_reason = String::new();
    for attempt in 1..=cfg.max_attempts {
        if attempt > 1 {
            let base = Duration::from_millis(cfg.backoff_base_ms) * 2u32.pow(attempt - 2);
            let jitter = Duration::from_millis(u64::from(attempt) * 37 % 100);
            clock.sleep(base + jitter);
        }
        limiter.acquire();
        let resp = match transport.get(url, cfg.auth_token.as_deref()) {
            Ok(r) => r,
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        match resp.status {
            200..=299 => return Ok(resp),
            401 => {
                return Err(Error::Credential(format!(
                    "API rejected credentials (HTTP 401) for {url}"
                )))
            }
            403 | 429 => {
                last_reason = format!("HTTP {} (throttled)", resp.status);
            }
            500..=599 => {
                last_reason = format!("HTTP {}", resp.status);
            }
            other => {
                return Err(Error::Transport {
                    reason: format!("HTTP {other} for {url}"),
                    attempts: attempt,
                    retryable: false,
                });
            }
        }
    }
    Err(Error::Transport {
        reason: format!("{last_reason} for {url}"),
        attempts: cfg.max_attempts,
        retryable: true,
    })
}

fn search_url(cfg: &MinerConfig, language: &str, page: usize) -> String {
    let query = format!(
        "language:{language}+stars:>={}+created:{}..{}",
        cfg.min_stars, cfg.created_from, cfg.created_to
    );
    format!(
        "{}/search/repositories?q={query}&per_page={}&page={page}",
        cfg.api_base.trim_end_matches('/'),
        cfg.per_page
    )
}

/// Paginate the search endpoint until exhaustion or `max_repos`, filtering
/// client-side on stars, creation date, and host language label.
pub fn search_repositories(
    cfg: &MinerConfig,
    transport: &dyn Transport,
    clock: &dyn Clock,
) -> Result<Vec<RepoRecord>> {
    let mut cursor = MiningCursor::default();
    search_resume(cfg, transport, clock, &mut cursor)?;
    Ok(cursor.records)
}

/// As [`search_repositories`], continuing from (and updating) a cursor.
pub fn search_resume(
    cfg: &MinerConfig,
    transport: &dyn Transport,
    clock: &dyn Clock,
    cursor: &mut MiningCursor,
) -> Result<()> {
    cfg.validate()?;
    let limiter = RateLimiter::new(
        cfg.rate_limit_per_hour,
        Duration::from_secs(3600),
        clock,
    );
    let languages: Vec<&String> = cfg.languages.iter().collect();

    while cursor.language_idx < languages.len() {
        let language = languages[cursor.language_idx];
        if cursor.page == 0 {
            cursor.page = 1;
        }
        loop {
            if let Some(cap) = cfg.max_repos {
                if cursor.records.len() >= cap {
                    return Ok(());
                }
            }
            let url = search_url(cfg, language, cursor.page);
            let resp = fetch_with_retry(transport, &limiter, clock, cfg, &url)?;
            let page: SearchPage =
                serde_json::from_str(&resp.body).map_err(|e| Error::Protocol(format!(
                    "malformed search response for {url}: {e}"
                )))?;
            let exhausted = page.items.len() < cfg.per_page;
            for item in page.items {
                if let Some(cap) = cfg.max_repos {
                    if cursor.records.len() >= cap {
                        return Ok(());
                    }
                }
                let Some(created) = parse_created_at(&item.created_at) else {
                    continue;
                };
                let label = item.language.clone().unwrap_or_default().to_lowercase();
                if item.stargazers_count < cfg.min_stars
                    || created < cfg.created_from
                    || created > cfg.created_to
                    || !cfg.languages.contains(&label)
                {
                    continue;
                }
                if !cursor.seen.insert(item.full_name.clone()) {
                    continue;
                }
                cursor.records.push(RepoRecord {
                    full_name: item.full_name,
                    stars: item.stargazers_count,
                    created_at: created,
                    language: label,
                    default_branch: item.default_branch,
                });
            }
            cursor.page += 1;
            if exhausted {
                break;
            }
        }
        cursor.language_idx += 1;
        cursor.page = 0;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ArchiveListing {
    commit: String,
    files: Vec<ArchiveFile>,
}

#[derive(Debug, Deserialize)]
struct ArchiveFile {
    path: String,
    content: String,
    #[serde(default = "default_encoding")]
    encoding: String,
}

fn default_encoding() -> String {
    "utf-8".to_string()
}

fn extensions_for(language: &str) -> Vec<&'static str> {
    match language {
        "java" => vec!["java"],
        "python" => vec!["py"],
        "c++" | "cpp" => vec!["cpp", "cc", "cxx", "hpp", "h"],
        "c" => vec!["c", "h"],
        "rust" => vec!["rs"],
        "javascript" => vec!["js"],
        "typescript" => vec!["ts"],
        "go" => vec!["go"],
        _ => vec![],
    }
}

/// Per-repo fetch outcome, carrying both language-filter counts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FetchStats {
    pub files_seen: usize,
    pub files_matched: usize,
    pub files_skipped_non_utf8: usize,
}

/// Download a repo's archive listing and materialize matching files as
/// provenance-tagged documents. Binary (non-UTF-8) files are skipped; zero
/// matches is an empty result, not an error.
pub fn fetch_repo_files(
    repo: &RepoRecord,
    language: &str,
    dataset: &str,
    cfg: &MinerConfig,
    transport: &dyn Transport,
    limiter: &RateLimiter,
    clock: &dyn Clock,
) -> Result<(Vec<Document>, FetchStats)> {
    let url = format!(
        "{}/repos/{}/archive?ref={}",
        cfg.api_base.trim_end_matches('/'),
        repo.full_name,
        repo.default_branch
    );
    let resp = fetch_with_retry(transport, limiter, clock, cfg, &url)?;
    let listing: ArchiveListing = serde_json::from_str(&resp.body)
        .map_err(|e| Error::Protocol(format!("malformed archive listing for {url}: {e}")))?;

    let exts = extensions_for(language);
    let mut stats = FetchStats::default();
    let mut documents = Vec::new();
    for file in listing.files {
        stats.files_seen += 1;
        let ext = file.path.rsplit('.').next().unwrap_or("").to_lowercase();
        if !exts.iter().any(|e| *e == ext) {
            continue;
        }
        stats.files_matched += 1;
        let content = match file.encoding.as_str() {
            "base64" => {
                let cleaned: String =
                    file.content.chars().filter(|c| !c.is_whitespace()).collect();
                match base64::engine::general_purpose::STANDARD
                    .decode(cleaned)
                    .ok()
                    .and_then(|bytes| String::from_utf8(bytes).ok())
                {
                    Some(text) => text,
                    None => {
                        stats.files_skipped_non_utf8 += 1;
                        continue;
                    }
                }
            }
            _ => file.content,
        };
        if content.is_empty() {
            continue;
        }
        documents.push(Document {
            id: format!("{}:{}", repo.full_name, file.path),
            dataset: dataset.to_string(),
            language: language.to_string(),
            path: file.path,
            content,
            repo: Some(repo.full_name.clone()),
            commit: Some(listing.commit.clone()),
            created_at: Some(repo.created_at),
        });
    }
    Ok((documents, stats))
}

/// Aggregate mining outcome.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MiningStats {
    pub repos: usize,
    pub files_seen: usize,
    pub files_matched: usize,
    pub files_skipped_non_utf8: usize,
}

/// Search then fetch: the full mining pass producing one corpus.
pub fn mine_corpus(
    cfg: &MinerConfig,
    transport: &dyn Transport,
    clock: &dyn Clock,
    dataset: &str,
) -> Result<(Corpus, MiningStats)> {
    let records = search_repositories(cfg, transport, clock)?;
    let limiter = RateLimiter::new(
        cfg.rate_limit_per_hour,
        Duration::from_secs(3600),
        clock,
    );
    let mut stats = MiningStats {
        repos: records.len(),
        ..MiningStats::default()
    };
    let mut documents = Vec::new();
    for record in &records {
        let (docs, fetch) =
            fetch_repo_files(record, &record.language, dataset, cfg, transport, &limiter, clock)?;
        stats.files_seen += fetch.files_seen;
        stats.files_matched += fetch.files_matched;
        stats.files_skipped_non_utf8 += fetch.files_skipped_non_utf8;
        documents.extend(docs);
    }
    Ok((Corpus::new(dataset, documents)?, stats))
}

/// Mining pass over 2022-01-01..2023-12-31, producing the reference corpus
/// that cross-filtering runs against.
pub fn build_reference_corpus(
    cfg: &MinerConfig,
    transport: &dyn Transport,
    clock: &dyn Clock,
) -> Result<(Corpus, MiningStats)> {
    let mut cfg = cfg.clone();
    cfg.created_from = NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date");
    cfg.created_to = NaiveDate::from_ymd_opt(2023, 12, 31).expect("valid date");
    mine_corpus(&cfg, transport, clock, "reference-2022-2023")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn created_at_parses_date_prefix() {
        assert_eq!(
            parse_created_at("2024-03-05T12:34:56Z"),
            Some(NaiveDate::from_ymd_opt(2024, 3, 5).unwrap())
        );
        assert_eq!(parse_created_at("bogus"), None);
    }

    #[test]
    fn search_url_is_deterministic() {
        let cfg = MinerConfig {
            languages: BTreeSet::from(["java".to_string()]),
            min_stars: 100,
            created_from: "2024-01-01".parse().unwrap(),
            created_to: "2024-12-31".parse().unwrap(),
            max_repos: None,
            api_base: "https://api.example.test".to_string(),
            auth_token: None,
            rate_limit_per_hour: 5000,
            max_attempts: 3,
            backoff_base_ms: 500,
            per_page: 100,
        };
        assert_eq!(
            search_url(&cfg, "java", 2),
            "https://api.example.test/search/repositories?q=language:java+stars:>=100+created:2024-01-01..2024-12-31&per_page=100&page=2"
        );
    }

    #[test]
    fn extension_map_covers_configured_languages() {
        assert_eq!(extensions_for("java"), vec!["java"]);
        assert_eq!(extensions_for("python"), vec!["py"]);
        assert!(extensions_for("cpp").contains(&"cpp"));
    }
}
