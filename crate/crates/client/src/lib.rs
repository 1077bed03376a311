//! Client for an external scoring service that turns responses into safety
//! probabilities and judges whether two sentences mean the same thing.
//!
//! Wire protocol:
//!
//! - `POST {base}/score` with `{"prompt", "response"}` answers
//!   `{"safety_probability"}`.
//! - `POST {base}/judge` with `{"a", "b", "system_prompt"}` answers
//!   `{"verdict", "prob"}`.
//!
//! Requests run on a bounded pool of worker threads. Failures are reported
//! per item and never abort the rest of the batch.

mod transport;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use guardlab_core::judge::{JudgedPair, Verdict, JUDGE_PROMPT};
use guardlab_core::model::{ParaphraseSet, SafetyScore};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use url::Url;

pub use transport::{Exchange, HttpTransport, ReplayTransport, Transport, TransportError};

pub const DEFAULT_TOKEN_ENV: &str = "GUARDLAB_SERVICE_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub base_url: Url,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// First retry delay; each further retry doubles it.
    pub backoff: Duration,
}

impl ServiceConfig {
    pub fn new(base_url: Url) -> Self {
        ServiceConfig {
            base_url,
            auth_token_env: DEFAULT_TOKEN_ENV.to_owned(),
            timeout: Duration::from_secs(30),
            max_retries: 3,
            max_in_flight: 4,
            backoff: Duration::from_millis(250),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_in_flight == 0 {
            return Err(ClientError::Config("max_in_flight must be at least 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(ClientError::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn token(&self) -> Option<String> {
        std::env::var(&self.auth_token_env).ok().filter(|t| !t.is_empty())
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid service configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Why a single request produced no usable result.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ItemError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("invalid payload: {0}")]
    Payload(String),
    #[error("unparseable reply: {0}")]
    Parse(String),
}

impl ItemError {
    pub fn kind(&self) -> &'static str {
        match self {
            ItemError::Transport { .. } => "transport",
            ItemError::Auth(_) => "auth",
            ItemError::Payload(_) => "payload",
            ItemError::Parse(_) => "parse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemFailure {
    pub set_id: String,
    /// 0 is the original, 1.. the paraphrases.
    pub member: usize,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRun {
    pub sets: Vec<ParaphraseSet>,
    pub requested: usize,
    pub scored: usize,
    pub failures: Vec<ItemFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeReply {
    pub pair: JudgedPair,
    /// Set when the service sent no probability and 1.0 was assumed.
    pub prob_defaulted: bool,
}

pub struct Client<T: Transport> {
    transport: T,
    config: ServiceConfig,
}

impl Client<HttpTransport> {
    /// HTTP client whose token, if any, comes from the configured environment
    /// variable.
    pub fn http(config: ServiceConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let transport = HttpTransport::new(config.base_url.clone(), config.timeout, config.token())?;
        Ok(Client { transport, config })
    }
}

impl<T: Transport> Client<T> {
    pub fn new(transport: T, config: ServiceConfig) -> Result<Self, ClientError> {
        config.validate()?;
        Ok(Client { transport, config })
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn call(&self, path: &str, body: &Value) -> Result<Value, ItemError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.post(path, body) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_auth() => return Err(ItemError::Auth(e.to_string())),
                Err(e) if e.is_retryable() && attempt <= self.config.max_retries => {
                    let delay = self.config.backoff.saturating_mul(1 << (attempt - 1).min(16));
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
                Err(e) => {
                    return Err(ItemError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
            }
        }
    }

    pub fn score_text(&self, prompt: &str, response: &str) -> Result<SafetyScore, ItemError> {
        let reply = self.call("score", &json!({ "prompt": prompt, "response": response }))?;
        let p = reply
            .get("safety_probability")
            .and_then(Value::as_f64)
            .ok_or_else(|| ItemError::Payload(format!("missing safety_probability in {reply}")))?;
        SafetyScore::new(p).map_err(|e| ItemError::Payload(e.to_string()))
    }

    /// Scores members of every set. Only members without a score are sent
    /// unless `overwrite` is set. A failed member keeps its previous score and
    /// gains an error annotation.
    pub fn score_sets(&self, sets: &[ParaphraseSet], overwrite: bool) -> ScoreRun {
        let mut work = Vec::new();
        for (si, set) in sets.iter().enumerate() {
            for (mi, m) in set.members().enumerate() {
                if overwrite || m.score.is_none() {
                    work.push((si, mi, set.prompt.clone().unwrap_or_default(), m.text.clone()));
                }
            }
        }
        let results = run_pool(&work, self.config.max_in_flight, |(_, _, prompt, text)| {
            self.score_text(prompt, text)
        });

        let mut out = sets.to_vec();
        let mut failures = Vec::new();
        let mut scored = 0;
        for ((si, mi, _, _), result) in work.iter().zip(results) {
            let member = out[*si].members_mut().nth(*mi).expect("member index in range");
            match result {
                Ok(score) => {
                    member.score = Some(score);
                    member.error = None;
                    scored += 1;
                }
                Err(e) => {
                    member.error = Some(format!("{}: {e}", e.kind()));
                    failures.push(ItemFailure {
                        set_id: sets[*si].id.clone(),
                        member: *mi,
                        kind: e.kind(),
                        message: e.to_string(),
                    });
                }
            }
        }
        ScoreRun {
            sets: out,
            requested: work.len(),
            scored,
            failures,
        }
    }

    pub fn score_set(&self, set: &ParaphraseSet, overwrite: bool) -> ScoreRun {
        self.score_sets(std::slice::from_ref(set), overwrite)
    }

    pub fn judge(&self, a: &str, b: &str) -> Result<JudgeReply, ItemError> {
        let reply = self.call("judge", &json!({ "a": a, "b": b, "system_prompt": JUDGE_PROMPT }))?;
        let raw = reply
            .get("verdict")
            .and_then(Value::as_str)
            .ok_or_else(|| ItemError::Payload(format!("missing verdict in {reply}")))?;
        let verdict: Verdict = raw.parse().map_err(|_| ItemError::Parse(format!("verdict {raw:?}")))?;
        let (prob, prob_defaulted) = match reply.get("prob") {
            None | Some(Value::Null) => (1.0, true),
            Some(v) => match v.as_f64() {
                Some(p) if (0.0..=1.0).contains(&p) => (p, false),
                _ => return Err(ItemError::Payload(format!("prob {v} is not a probability"))),
            },
        };
        Ok(JudgeReply {
            pair: JudgedPair {
                a: a.to_owned(),
                b: b.to_owned(),
                verdict,
                prob,
                gold_similarity: None,
            },
            prob_defaulted,
        })
    }

    /// Judges every pair, results in input order.
    pub fn judge_pairs(&self, pairs: &[(String, String)]) -> Vec<Result<JudgeReply, ItemError>> {
        run_pool(pairs, self.config.max_in_flight, |(a, b)| self.judge(a, b))
    }
}

/// Applies `f` to every item on at most `workers` threads and returns the
/// results in item order.
fn run_pool<I: Sync, O: Send>(items: &[I], workers: usize, f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<O>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let out = f(item);
                slots.lock().expect("result lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|o| o.expect("every item processed"))
        .collect()
}
