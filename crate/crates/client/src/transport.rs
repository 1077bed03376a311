use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::Url;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response body is not JSON: {0}")]
    Decode(String),
    #[error("no recorded exchange for {path} {request}")]
    Unrecorded { path: String, request: String },
}

impl TransportError {
    /// Connection failures, rate limiting and server errors are worth
    /// retrying; everything else will fail the same way again.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Connect(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    pub fn is_auth(&self) -> bool {
        matches!(self, TransportError::Status { status: 401 | 403, .. })
    }
}

/// One JSON request/response round trip. Implementations must be usable from
/// several worker threads at once.
pub trait Transport: Send + Sync {
    fn post(&self, path: &str, body: &Value) -> Result<Value, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    base: Url,
    token: Option<String>,
}

impl HttpTransport {
    /// `token` is sent as a bearer credential when present.
    pub fn new(base: Url, timeout: Duration, token: Option<String>) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(HttpTransport { client, base, token })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base.as_str().trim_end_matches('/'), path.trim_start_matches('/'))
    }
}

impl Transport for HttpTransport {
    fn post(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        let mut req = self.client.post(self.url(path)).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| TransportError::Connect(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError::Connect(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))
    }
}

/// A recorded request and the service's answer to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub path: String,
    pub request: Value,
    #[serde(default = "ok_status")]
    pub status: u16,
    #[serde(default)]
    pub response: Value,
}

fn ok_status() -> u16 {
    200
}

/// Serves responses from a transcript instead of the network. Identical
/// requests recorded several times are answered in recorded order; the last
/// answer repeats once the queue runs down.
#[derive(Default)]
pub struct ReplayTransport {
    queues: Mutex<HashMap<(String, String), VecDeque<Exchange>>>,
    delay: Duration,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl ReplayTransport {
    pub fn new(exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        let mut queues: HashMap<(String, String), VecDeque<Exchange>> = HashMap::new();
        for ex in exchanges {
            queues.entry((ex.path.clone(), ex.request.to_string())).or_default().push_back(ex);
        }
        ReplayTransport {
            queues: Mutex::new(queues),
            ..Default::default()
        }
    }

    pub fn from_jsonl(path: impl AsRef<Path>) -> guardlab_core::Result<Self> {
        Ok(Self::new(guardlab_core::io::read_jsonl::<Exchange>(path)?))
    }

    /// Holds every call for `delay`, which makes overlap observable in tests.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }
}

impl Transport for ReplayTransport {
    fn post(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let key = (path.to_owned(), body.to_string());
        let found = {
            let mut queues = self.queues.lock().expect("replay lock");
            queues.get_mut(&key).and_then(|q| {
                if q.len() > 1 {
                    q.pop_front()
                } else {
                    q.front().cloned()
                }
            })
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let ex = found.ok_or(TransportError::Unrecorded {
            path: key.0,
            request: key.1,
        })?;
        if (200..300).contains(&ex.status) {
            Ok(ex.response)
        } else {
            Err(TransportError::Status {
                status: ex.status,
                body: ex.response.to_string(),
            })
        }
    }
}
