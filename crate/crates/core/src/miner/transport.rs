//! HTTP transport abstraction for the miner: live requests or a directory of
//! recorded responses, so the full mining pipeline replays without network.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &str, bearer_token: Option<&str>) -> Result<HttpResponse>;
}

/// Live transport over reqwest.
pub struct LiveTransport {
    client: reqwest::blocking::Client,
}

impl LiveTransport {
    pub fn new(timeout: std::time::Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent("leakaudit")
            .build()
            .map_err(|e| Error::Transport {
                reason: e.to_string(),
                attempts: 0,
                retryable: false,
            })?;
        Ok(Self { client })
    }
}

impl Transport for LiveTransport {
    fn get(&self, url: &str, bearer_token: Option<&str>) -> Result<HttpResponse> {
        let mut req = self.client.get(url);
        if let Some(token) = bearer_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Error::Transport {
            reason: e.to_string(),
            attempts: 1,
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().unwrap_or_default();
        Ok(HttpResponse { status, body })
    }
}

/// One recorded response. Several files may target the same (method, url);
/// they are served in `sequence` order, and the last one repeats.
#[derive(Debug, Deserialize)]
struct FixtureFile {
    #[serde(default = "default_method")]
    method: String,
    url: String,
    #[serde(default = "default_status")]
    status: u16,
    body: serde_json::Value,
    #[serde(default)]
    sequence: u32,
}

fn default_method() -> String {
    "GET".to_string()
}

fn default_status() -> u16 {
    200
}

/// Replays recorded responses from a directory of JSON files, one file per
/// (method, url, sequence) response.
pub struct FixtureTransport {
    responses: Mutex<HashMap<String, VecDeque<HttpResponse>>>,
}

impl FixtureTransport {
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<FixtureFile> = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::Ingestion {
            path: dir.display().to_string(),
            reason: e.to_string(),
        })?;
        for entry in entries {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let fixture: FixtureFile =
                serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: 0,
                    reason: e.to_string(),
                })?;
            files.push(fixture);
        }
        files.sort_by(|a, b| {
            (&a.method, &a.url, a.sequence).cmp(&(&b.method, &b.url, b.sequence))
        });
        let mut responses: HashMap<String, VecDeque<HttpResponse>> = HashMap::new();
        for f in files {
            responses
                .entry(format!("{} {}", f.method, f.url))
                .or_default()
                .push_back(HttpResponse {
                    status: f.status,
                    body: f.body.to_string(),
                });
        }
        Ok(Self {
            responses: Mutex::new(responses),
        })
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &str, _bearer_token: Option<&str>) -> Result<HttpResponse> {
        let key = format!("GET {url}");
        let mut responses = self.responses.lock().unwrap();
        match responses.get_mut(&key) {
            Some(queue) if queue.len() > 1 => Ok(queue.pop_front().expect("non-empty")),
            Some(queue) if queue.len() == 1 => Ok(queue.front().expect("non-empty").clone()),
            _ => Err(Error::Ingestion {
                path: url.to_string(),
                reason: "no recorded fixture for this request".to_string(),
            }),
        }
    }
}
