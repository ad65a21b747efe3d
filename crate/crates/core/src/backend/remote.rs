//! HTTP client for a remote scoring server.
//!
//! Wire protocol (JSON over HTTP, all endpoints stateless):
//!   GET  /v1/info                       -> {"name", "vocab_size", "context_window", "family"}
//!   POST /v1/score {"tokens": [...]}    -> {"logprobs": [...]}  (length = tokens - 1, natural log)
//!   POST /v1/greedy {"context", "n"}    -> {"tokens": [...]}    (length n)
//!   POST /v1/tokenize {"text"}          -> {"tokens": [...]}
//!   POST /v1/detokenize {"tokens"}      -> {"text"}
//! Errors: {"error": str, "retryable": bool}.
//!
//! Requests carry an idempotency key and retry transient failures (429, 5xx,
//! transport) with exponential backoff, at most `max_attempts` tries. The
//! protocol is token-id based so striding boundaries are exact; servers that
//! insert their own begin-of-sequence token must still return t-1 logprobs
//! for the t tokens provided.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{check_scorable, Backend, BackendDescriptor, ScoredSequence, TokenSeq};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    /// First backoff delay; doubles per retry.
    pub backoff_base: Duration,
    pub timeout: Duration,
    /// Maximum concurrent in-flight requests.
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            max_attempts: 3,
            backoff_base: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    slots: Mutex<usize>,
    cv: Condvar,
}

impl InFlight {
    fn new(n: usize) -> Self {
        Self {
            slots: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.cv.wait(slots).unwrap();
        }
        *slots -= 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut slots = self.0.slots.lock().unwrap();
        *slots += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    tokens: &'a [u32],
}

#[derive(Deserialize)]
struct ScoreResponse {
    logprobs: Vec<f64>,
}

#[derive(Serialize)]
struct GreedyRequest<'a> {
    context: &'a [u32],
    n: usize,
}

#[derive(Deserialize)]
struct GreedyResponse {
    tokens: Vec<u32>,
}

#[derive(Serialize)]
struct TokenizeRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct TokenizeResponse {
    tokens: Vec<u32>,
}

#[derive(Serialize)]
struct DetokenizeRequest<'a> {
    tokens: &'a [u32],
}

#[derive(Deserialize)]
struct DetokenizeResponse {
    text: String,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    retryable: bool,
}

/// [`Backend`] implementation delegating to a remote scoring server.
pub struct RemoteBackend {
    client: reqwest::blocking::Client,
    cfg: RemoteConfig,
    descriptor: BackendDescriptor,
    in_flight: InFlight,
}

impl RemoteBackend {
    /// Handshake with the server: fetch and validate its descriptor.
    pub fn connect(cfg: RemoteConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| Error::Transport {
                reason: e.to_string(),
                attempts: 0,
                retryable: false,
            })?;
        let in_flight = InFlight::new(cfg.max_in_flight);
        let mut backend = Self {
            client,
            descriptor: BackendDescriptor {
                name: String::new(),
                vocab_size: 0,
                context_window: 2,
                family: String::new(),
            },
            cfg,
            in_flight,
        };
        let descriptor: BackendDescriptor = backend.request("GET", "/v1/info", None)?;
        descriptor.validate()?;
        backend.descriptor = descriptor;
        Ok(backend)
    }

    fn request<T: DeserializeOwned>(
        &self,
        method: &str,
        path: &str,
        body: Option<serde_json::Value>,
    ) -> Result<T> {
        let _slot = self.in_flight.acquire();
        let url = format!("{}{}", self.cfg.base_url.trim_end_matches('/'), path);
        let idempotency_key = uuid::Uuid::new_v4().to_string();
        let mut last_reason = String::new();

        for attempt in 1..=self.cfg.max_attempts {
            if attempt > 1 {
                let delay = self.cfg.backoff_base * 2u32.pow(attempt - 2);
                std::thread::sleep(delay);
            }
            let req = match method {
                "GET" => self.client.get(&url),
                _ => self.client.post(&url),
            };
            let req = req.header("Idempotency-Key", &idempotency_key);
            let req = match &body {
                Some(b) => req.json(b),
                None => req,
            };
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.json::<T>().map_err(|e| {
                            Error::Protocol(format!("malformed response body: {e}"))
                        });
                    }
                    let body_text = resp.text().unwrap_or_default();
                    let parsed: Option<ErrorBody> = serde_json::from_str(&body_text).ok();
                    let reason = parsed
                        .as_ref()
                        .map(|b| b.error.clone())
                        .unwrap_or_else(|| format!("HTTP {status}"));
                    let transient = status.as_u16() == 429 || status.is_server_error();
                    if !transient {
                        return Err(Error::Transport {
                            reason: format!("HTTP {status}: {reason}"),
                            attempts: attempt,
                            retryable: parsed.map(|b| b.retryable).unwrap_or(false),
                        });
                    }
                    last_reason = format!("HTTP {status}: {reason}");
                }
                Err(e) => {
                    last_reason = e.to_string();
                }
            }
        }
        Err(Error::Transport {
            reason: last_reason,
            attempts: self.cfg.max_attempts,
            retryable: true,
        })
    }

    fn check_ids(&self, tokens: &[u32]) -> Result<()> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.descriptor.vocab_size) {
            return Err(Error::Protocol(format!(
                "server returned token id {bad} outside its advertised vocabulary ({})",
                self.descriptor.vocab_size
            )));
        }
        Ok(())
    }
}

impl Backend for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Result<TokenSeq> {
        let resp: TokenizeResponse = self.request(
            "POST",
            "/v1/tokenize",
            Some(serde_json::to_value(TokenizeRequest { text })?),
        )?;
        self.check_ids(&resp.tokens)?;
        Ok(TokenSeq(resp.tokens))
    }

    fn detokenize(&self, tokens: &TokenSeq) -> Result<String> {
        let resp: DetokenizeResponse = self.request(
            "POST",
            "/v1/detokenize",
            Some(serde_json::to_value(DetokenizeRequest {
                tokens: tokens.as_slice(),
            })?),
        )?;
        Ok(resp.text)
    }

    fn score(&self, tokens: &TokenSeq) -> Result<ScoredSequence> {
        check_scorable(tokens, self.descriptor.context_window)?;
        let resp: ScoreResponse = self.request(
            "POST",
            "/v1/score",
            Some(serde_json::to_value(ScoreRequest {
                tokens: tokens.as_slice(),
            })?),
        )?;
        if resp.logprobs.len() != tokens.len() - 1 {
            return Err(Error::Protocol(format!(
                "server returned {} logprobs for a {}-token sequence (expected {})",
                resp.logprobs.len(),
                tokens.len(),
                tokens.len() - 1
            )));
        }
        ScoredSequence::new(tokens.clone(), resp.logprobs)
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
        let resp: GreedyResponse = self.request(
            "POST",
            "/v1/greedy",
            Some(serde_json::to_value(GreedyRequest {
                context: context.as_slice(),
                n,
            })?),
        )?;
        if resp.tokens.len() != n {
            return Err(Error::Protocol(format!(
                "server returned {} tokens for a greedy request of n={n}",
                resp.tokens.len()
            )));
        }
        self.check_ids(&resp.tokens)?;
        Ok(TokenSeq(resp.tokens))
    }
}
