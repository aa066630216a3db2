//! External scoring service client with a persistent response cache.
//!
//! Protocol: POST `{state_text}` -> `{score}`. Responses are cached by a
//! content hash of the state text so repeated runs are reproducible even if
//! the service drifts; the cache persists as JSON-lines.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;

use super::UtilityError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    /// JSON-lines cache file; in-memory only when absent.
    pub cache_path: Option<PathBuf>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            endpoint: String::new(),
            timeout_ms: 10_000,
            max_retries: 3,
            backoff_base_ms: 100,
            cache_path: None,
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    state_text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    state_hash: String,
    score: f64,
}

pub struct ExternalScorer {
    cfg: ScorerConfig,
    http: reqwest::blocking::Client,
    cache: RwLock<HashMap<String, f64>>,
    cache_file: Option<Mutex<File>>,
}

impl ExternalScorer {
    pub fn new(cfg: ScorerConfig) -> Result<Self, UtilityError> {
        if cfg.endpoint.is_empty() {
            return Err(UtilityError::ScorerUnavailable("no scorer endpoint configured".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| UtilityError::ScorerUnavailable(format!("http client: {e}")))?;

        let mut cache = HashMap::new();
        let cache_file = match &cfg.cache_path {
            Some(path) => {
                if path.exists() {
                    let reader = BufReader::new(File::open(path).map_err(io_err)?);
                    for line in reader.lines() {
                        let line = line.map_err(io_err)?;
                        if line.trim().is_empty() {
                            continue;
                        }
                        let entry: CacheLine = serde_json::from_str(&line)
                            .map_err(|e| UtilityError::ScorerUnavailable(format!("cache: {e}")))?;
                        cache.insert(entry.state_hash, entry.score);
                    }
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(io_err)?;
                Some(Mutex::new(file))
            }
            None => None,
        };
        Ok(ExternalScorer { cfg, http, cache: RwLock::new(cache), cache_file })
    }

    /// Scores a state text, consulting the cache first. Cache writes are
    /// atomic per key (one JSON line per entry).
    pub fn score(&self, state_text: &str) -> Result<f64, UtilityError> {
        let key = sha256_hex(state_text);
        if let Some(score) = self.cache.read().unwrap().get(&key) {
            return Ok(*score);
        }
        let score = self.fetch(state_text)?;
        self.cache.write().unwrap().insert(key.clone(), score);
        if let Some(file) = &self.cache_file {
            let line = serde_json::to_string(&CacheLine { state_hash: key, score })
                .expect("cache line serializes");
            let mut file = file.lock().unwrap();
            writeln!(file, "{line}").map_err(io_err)?;
        }
        Ok(score)
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    fn fetch(&self, state_text: &str) -> Result<f64, UtilityError> {
        let mut attempt = 0u32;
        loop {
            let result = self
                .http
                .post(&self.cfg.endpoint)
                .json(&ScoreRequest { state_text })
                .send()
                .map_err(|e| format!("transport: {e}"))
                .and_then(|resp| {
                    let status = resp.status();
                    if !status.is_success() {
                        return Err(format!("status {status}"));
                    }
                    resp.json::<ScoreResponse>().map_err(|e| format!("malformed response: {e}"))
                });
            match result {
                Ok(resp) => return Ok(resp.score),
                Err(msg) if attempt < self.cfg.max_retries => {
                    std::thread::sleep(Duration::from_millis(
                        self.cfg.backoff_base_ms.saturating_mul(1 << attempt.min(16)),
                    ));
                    attempt += 1;
                    tracing::warn!(attempt, "scorer request failed; retrying: {msg}");
                }
                Err(msg) => return Err(UtilityError::ScorerUnavailable(msg)),
            }
        }
    }
}

fn io_err(e: std::io::Error) -> UtilityError {
    UtilityError::ScorerUnavailable(format!("cache io: {e}"))
}
