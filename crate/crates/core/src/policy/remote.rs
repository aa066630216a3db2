//! Remote completion-API adapter (JSON over HTTP).
//!
//! Wire shape is compatible with common completion endpoints:
//! request `{prompt, n, temperature, stop, max_tokens}`, response
//! `{choices: [{text, logprob}]}`. Transport failures retry with
//! exponential backoff before surfacing `PolicyError::Unavailable`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::mdp::{SegmentMode, State, Step};

use super::{AdapterKind, PolicyAdapter, PolicyError, StepCandidate};

/// Environment variables consulted by [`RemoteConfig::from_env`].
pub const ENDPOINT_VAR: &str = "QPLAN_ENDPOINT";
pub const API_KEY_VAR: &str = "QPLAN_API_KEY";
pub const TIMEOUT_VAR: &str = "QPLAN_TIMEOUT_MS";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full URL of the completion endpoint.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    /// Retries after the initial attempt for retriable failures.
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    /// Completions requested per top-k call, as a multiple of k.
    pub oversample_factor: usize,
    /// Resampling rounds allowed while deduplicating top-k candidates.
    pub dedup_attempts: usize,
    pub max_tokens_per_step: usize,
    /// Bound on concurrent in-flight requests.
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            api_key: None,
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_base_ms: 200,
            oversample_factor: 2,
            dedup_attempts: 3,
            max_tokens_per_step: 128,
            max_in_flight: 8,
        }
    }
}

impl RemoteConfig {
    /// Reads endpoint, auth token and timeout from the environment; explicit
    /// fields on `self` win over unset variables.
    pub fn from_env() -> Self {
        let mut cfg = RemoteConfig::default();
        if let Ok(endpoint) = std::env::var(ENDPOINT_VAR) {
            cfg.endpoint = endpoint;
        }
        cfg.api_key = std::env::var(API_KEY_VAR).ok();
        if let Some(ms) = std::env::var(TIMEOUT_VAR).ok().and_then(|v| v.parse().ok()) {
            cfg.timeout_ms = ms;
        }
        cfg
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    n: usize,
    temperature: f64,
    stop: Vec<String>,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    logprob: Option<f64>,
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(limit: usize) -> Self {
        InFlight { slots: Mutex::new(limit.max(1)), freed: Condvar::new() }
    }

    fn acquire(&self) {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.freed.wait(slots).unwrap();
        }
        *slots -= 1;
    }

    fn release(&self) {
        *self.slots.lock().unwrap() += 1;
        self.freed.notify_one();
    }
}

pub struct RemotePolicy {
    cfg: RemoteConfig,
    mode: SegmentMode,
    http: reqwest::blocking::Client,
    in_flight: InFlight,
}

impl RemotePolicy {
    pub fn new(cfg: RemoteConfig, mode: SegmentMode) -> Result<Self, PolicyError> {
        if cfg.endpoint.is_empty() {
            return Err(PolicyError::Unavailable(format!(
                "no remote endpoint configured (set {ENDPOINT_VAR})"
            )));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| PolicyError::Unavailable(format!("http client: {e}")))?;
        let in_flight = InFlight::new(cfg.max_in_flight);
        Ok(RemotePolicy { cfg, mode, http, in_flight })
    }

    fn stop_tokens(&self) -> Vec<String> {
        match self.mode {
            SegmentMode::Line => vec!["\n".to_string()],
            SegmentMode::FixedTokens { .. } => Vec::new(),
        }
    }

    fn max_tokens(&self) -> usize {
        match self.mode {
            SegmentMode::Line => self.cfg.max_tokens_per_step,
            SegmentMode::FixedTokens { n } => n,
        }
    }

    /// One completion call with retry. Retriable: transport errors, 429 and
    /// 5xx statuses. Other statuses fail fast.
    fn complete(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<Choice>, PolicyError> {
        let body = CompletionRequest {
            prompt,
            n,
            temperature,
            stop: self.stop_tokens(),
            max_tokens: self.max_tokens(),
        };
        let mut attempt = 0u32;
        loop {
            self.in_flight.acquire();
            let result = self.send(&body);
            self.in_flight.release();
            match result {
                Ok(choices) => return Ok(choices),
                Err(Retry::Fatal(msg)) => return Err(PolicyError::Unavailable(msg)),
                Err(Retry::Transient(msg)) => {
                    if attempt >= self.cfg.max_retries {
                        return Err(PolicyError::Unavailable(format!(
                            "{msg} (after {attempt} retries)"
                        )));
                    }
                    let delay = self.cfg.backoff_base_ms.saturating_mul(1 << attempt.min(16));
                    warn!(attempt, delay_ms = delay, "remote completion failed; retrying: {msg}");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }

    fn send(&self, body: &CompletionRequest<'_>) -> Result<Vec<Choice>, Retry> {
        let mut req = self.http.post(&self.cfg.endpoint).json(body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Retry::Transient(format!("transport: {e}")))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Retry::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(Retry::Fatal(format!("status {status}")));
        }
        let parsed: CompletionResponse =
            resp.json().map_err(|e| Retry::Fatal(format!("malformed response: {e}")))?;
        Ok(parsed.choices)
    }

    /// Converts a raw completion into a single step. Empty text is an
    /// end-of-sequence signal; in line mode only the first line is kept
    /// (backends are asked to stop at newlines, this is defensive).
    fn to_step(&self, raw: &str) -> Step {
        let text = match self.mode {
            SegmentMode::Line => raw.trim_end_matches('\n').split('\n').next().unwrap_or(""),
            SegmentMode::FixedTokens { .. } => raw,
        };
        if text.is_empty() {
            Step::end_of_sequence(self.mode)
        } else {
            Step { text: text.to_string(), mode: self.mode, eos: false }
        }
    }
}

enum Retry {
    Transient(String),
    Fatal(String),
}

impl PolicyAdapter for RemotePolicy {
    fn kind(&self) -> AdapterKind {
        AdapterKind::Remote
    }

    fn propose(
        &self,
        state: &State,
        k: usize,
        temperature: f64,
    ) -> Result<Vec<StepCandidate>, PolicyError> {
        // Sampling backends expose no exact top-k: oversample, dedup by
        // exact text, keep the k best by reported log-probability (arrival
        // order when scores are absent).
        let mut seen: Vec<(Step, f64)> = Vec::new();
        for _ in 0..self.cfg.dedup_attempts.max(1) {
            let n = (self.cfg.oversample_factor.max(1)) * k;
            let choices = self.complete(state.text(), n, temperature)?;
            for choice in choices {
                let step = self.to_step(&choice.text);
                if !seen.iter().any(|(s, _)| s.text == step.text) {
                    seen.push((step, choice.logprob.unwrap_or(0.0)));
                }
            }
            if seen.len() >= k {
                break;
            }
        }
        if seen.is_empty() {
            return Err(PolicyError::Unavailable("backend returned no choices".into()));
        }
        seen.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        seen.truncate(k);
        Ok(seen
            .into_iter()
            .enumerate()
            .map(|(rank, (step, score))| StepCandidate { step, score, rank })
            .collect())
    }

    fn sample_step(
        &self,
        state: &State,
        temperature: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<StepCandidate, PolicyError> {
        let choices = self.complete(state.text(), 1, temperature)?;
        let choice = choices
            .into_iter()
            .next()
            .ok_or_else(|| PolicyError::Unavailable("backend returned no choices".into()))?;
        Ok(StepCandidate {
            step: self.to_step(&choice.text),
            score: choice.logprob.unwrap_or(0.0),
            rank: 0,
        })
    }
}
