use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::json;
use thiserror::Error;

use super::wire::{extract_content, ChatRequest};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("invalid response: {0}")]
    Decode(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => true,
        }
    }
}

/// One chat-completion exchange; returns the assistant message content.
pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Chat-completion endpoint over HTTP(S). One attempt per call.
pub struct HttpTransport {
    url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build();
        HttpTransport {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let body = serde_json::to_string(request).map_err(|e| TransportError::Decode(e.to_string()))?;
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body.as_str()).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
            other => TransportError::Connect(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Decode(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        extract_content(&text).map_err(TransportError::Decode)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("quota exhausted: {0}")]
    Quota(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("request rejected: {0}")]
    Rejected(String),
}

/// Token bucket shared by all callers of one endpoint.
pub struct RateLimiter {
    per_sec: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(rpm: u32) -> Self {
        let per_sec = rpm.max(1) as f64 / 60.0;
        let capacity = per_sec.max(1.0);
        RateLimiter { per_sec, capacity, state: Mutex::new((capacity, Instant::now())) }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().unwrap();
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.per_sec).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / self.per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, backoff: Duration::from_millis(500), max_backoff: Duration::from_secs(30) }
    }
}

/// Adds retries, rate limiting and a JSONL request log to a transport.
pub struct ChatClient {
    transport: Box<dyn ChatTransport>,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    log: Option<Mutex<BufWriter<File>>>,
    seq: Mutex<u64>,
}

impl ChatClient {
    pub fn new(transport: Box<dyn ChatTransport>, retry: RetryPolicy) -> Self {
        ChatClient { transport, retry, limiter: None, log: None, seq: Mutex::new(0) }
    }

    pub fn with_rate_limit(mut self, rpm: Option<u32>) -> Self {
        self.limiter = rpm.map(RateLimiter::per_minute);
        self
    }

    pub fn with_log(mut self, path: &Path) -> std::io::Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        self.log = Some(Mutex::new(BufWriter::new(f)));
        Ok(self)
    }

    fn record(&self, entry: serde_json::Value) {
        if let Some(log) = &self.log {
            let mut w = log.lock().unwrap();
            // A failing log must not take the run down with it.
            let _ = writeln!(w, "{entry}").and_then(|_| w.flush());
        }
    }

    /// Send with retries on 5xx, 429, timeouts and connection errors.
    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let id = {
            let mut s = self.seq.lock().unwrap();
            *s += 1;
            *s
        };
        let mut attempt = 0u32;
        loop {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            let result = self.transport.send(request);
            match &result {
                Ok(content) => self.record(json!({"call": id, "attempt": attempt, "request": request, "content": content})),
                Err(e) => self.record(json!({"call": id, "attempt": attempt, "request": request, "error": e.to_string()})),
            }
            let err = match result {
                Ok(content) => return Ok(content),
                Err(e) => e,
            };
            if let TransportError::Status { status, body } = &err {
                match status {
                    401 | 403 => return Err(GatewayError::Auth(format!("HTTP {status}: {body}"))),
                    402 => return Err(GatewayError::Quota(format!("HTTP {status}: {body}"))),
                    _ => {}
                }
            }
            if !err.retryable() {
                return Err(GatewayError::Rejected(err.to_string()));
            }
            if attempt >= self.retry.max_retries {
                if matches!(err, TransportError::Status { status: 429, .. }) {
                    return Err(GatewayError::Quota(err.to_string()));
                }
                return Err(GatewayError::Exhausted { attempts: attempt + 1, last: err.to_string() });
            }
            let delay = self.retry.backoff.saturating_mul(1 << attempt.min(16)).min(self.retry.max_backoff);
            std::thread::sleep(delay);
            attempt += 1;
        }
    }
}
