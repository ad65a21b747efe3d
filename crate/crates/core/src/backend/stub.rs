//! Minimal in-process server for the scoring wire protocol.
//!
//! Serves any [`Backend`] over plain HTTP/1.1 on a loopback port. Tests use
//! it to exercise the remote client without live network; fault injection
//! scripts the next responses (status codes or contract violations).

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};

use super::{Backend, TokenSeq};
use crate::error::{Error, Result};

/// Scripted one-shot response override, consumed in FIFO order.
#[derive(Debug, Clone)]
pub enum Fault {
    /// Respond with this HTTP status and an error body.
    Status(u16, &'static str, bool),
    /// Answer /v1/score with one logprob too many (t instead of t-1).
    ScoreLengthOffByOne,
    /// Answer with a positive logprob.
    PositiveLogprob,
}

pub struct StubServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    faults: Arc<Mutex<VecDeque<Fault>>>,
    requests_served: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Bind a loopback port and serve `backend` until dropped.
    pub fn spawn(backend: Arc<dyn Backend>) -> Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let faults: Arc<Mutex<VecDeque<Fault>>> = Arc::new(Mutex::new(VecDeque::new()));
        let requests_served = Arc::new(AtomicUsize::new(0));

        let handle = {
            let shutdown = Arc::clone(&shutdown);
            let faults = Arc::clone(&faults);
            let served = Arc::clone(&requests_served);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let backend = Arc::clone(&backend);
                    let faults = Arc::clone(&faults);
                    let served = Arc::clone(&served);
                    std::thread::spawn(move || {
                        let _ = handle_connection(stream, backend.as_ref(), &faults, &served);
                    });
                }
            })
        };

        Ok(Self {
            addr,
            shutdown,
            faults,
            requests_served,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Queue a scripted response for the next request(s).
    pub fn inject(&self, fault: Fault) {
        self.faults.lock().unwrap().push_back(fault);
    }

    /// Total requests handled, including faulted ones.
    pub fn requests_served(&self) -> usize {
        self.requests_served.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // unblock the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn write_response(stream: &mut TcpStream, status: u16, reason: &str, body: &str) -> Result<()> {
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes())?;
    Ok(())
}

fn error_json(message: &str, retryable: bool) -> String {
    json!({"error": message, "retryable": retryable}).to_string()
}

fn handle_connection(
    mut stream: TcpStream,
    backend: &dyn Backend,
    faults: &Mutex<VecDeque<Fault>>,
    served: &AtomicUsize,
) -> Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(()); // shutdown poke or dropped connection
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let body: Value = if body.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&body).unwrap_or(Value::Null)
    };

    served.fetch_add(1, Ordering::SeqCst);

    if let Some(fault) = faults.lock().unwrap().pop_front() {
        return match fault {
            Fault::Status(status, msg, retryable) => {
                let reason = if status >= 500 { "Server Error" } else { "Error" };
                write_response(&mut stream, status, reason, &error_json(msg, retryable))
            }
            Fault::ScoreLengthOffByOne => {
                let tokens = token_array(&body, "tokens").unwrap_or_default();
                let bogus = vec![-0.5f64; tokens.len()];
                write_response(&mut stream, 200, "OK", &json!({"logprobs": bogus}).to_string())
            }
            Fault::PositiveLogprob => {
                let tokens = token_array(&body, "tokens").unwrap_or_default();
                let mut bogus = vec![-0.5f64; tokens.len().saturating_sub(1)];
                if let Some(first) = bogus.first_mut() {
                    *first = 0.25;
                }
                write_response(&mut stream, 200, "OK", &json!({"logprobs": bogus}).to_string())
            }
        };
    }

    let result = route(backend, &method, &path, &body);
    match result {
        Ok(response) => write_response(&mut stream, 200, "OK", &response.to_string()),
        Err(Error::Validation(msg)) | Err(Error::Protocol(msg)) => {
            write_response(&mut stream, 400, "Bad Request", &error_json(&msg, false))
        }
        Err(e) => write_response(&mut stream, 500, "Server Error", &error_json(&e.to_string(), true)),
    }
}

fn token_array(body: &Value, key: &str) -> Option<Vec<u32>> {
    body.get(key)?
        .as_array()?
        .iter()
        .map(|v| v.as_u64().map(|x| x as u32))
        .collect()
}

fn route(backend: &dyn Backend, method: &str, path: &str, body: &Value) -> Result<Value> {
    match (method, path) {
        ("GET", "/v1/info") => Ok(serde_json::to_value(backend.descriptor())?),
        ("POST", "/v1/score") => {
            let tokens = token_array(body, "tokens")
                .ok_or_else(|| Error::Validation("missing tokens array".to_string()))?;
            let scored = backend.score(&TokenSeq(tokens))?;
            Ok(json!({"logprobs": scored.logprobs}))
        }
        ("POST", "/v1/greedy") => {
            let context = token_array(body, "context")
                .ok_or_else(|| Error::Validation("missing context array".to_string()))?;
            let n = body
                .get("n")
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Validation("missing n".to_string()))?;
            let out = backend.greedy_continue(&TokenSeq(context), n as usize)?;
            Ok(json!({"tokens": out.0}))
        }
        ("POST", "/v1/tokenize") => {
            let text = body
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Validation("missing text".to_string()))?;
            Ok(json!({"tokens": backend.tokenize(text)?.0}))
        }
        ("POST", "/v1/detokenize") => {
            let tokens = token_array(body, "tokens")
                .ok_or_else(|| Error::Validation("missing tokens array".to_string()))?;
            Ok(json!({"text": backend.detokenize(&TokenSeq(tokens))?}))
        }
        _ => Err(Error::Validation(format!("no such endpoint: {method} {path}"))),
    }
}
