use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use slicemine_core::mine::PatternStats;
use thiserror::Error;

use crate::parse::{parse_verdict, JudgeVerdict};
use crate::prompt::build_prompt;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge unavailable after {attempts} attempt(s): {reason}")]
    Unavailable { attempts: usize, reason: String },

    #[error("judge rejected credentials (HTTP {0})")]
    Auth(u16),

    #[error("missing judge configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] slicemine_core::Error),
}

#[derive(Debug, Clone)]
pub struct JudgeConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub token: String,
    pub model: String,
    pub max_attempts: usize,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    pub concurrency: usize,
}

impl JudgeConfig {
    pub fn new(endpoint: &str, token: &str, model: &str) -> JudgeConfig {
        JudgeConfig {
            endpoint: endpoint.to_string(),
            token: token.to_string(),
            model: model.to_string(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
            concurrency: 4,
        }
    }

    /// JUDGE_ENDPOINT, JUDGE_TOKEN and JUDGE_MODEL.
    pub fn from_env() -> Result<JudgeConfig, JudgeError> {
        let var = |k: &str| std::env::var(k).map_err(|_| JudgeError::Config(format!("{k} is not set")));
        Ok(JudgeConfig::new(&var("JUDGE_ENDPOINT")?, &var("JUDGE_TOKEN")?, &var("JUDGE_MODEL")?))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JudgeResponse {
    /// Response body exactly as received.
    pub body: String,
    pub status: u16,
    pub attempts: usize,
    pub latency_ms: u128,
}

impl JudgeResponse {
    /// `choices[0].message.content` when the body is a chat-completion
    /// object, otherwise the body itself.
    pub fn content(&self) -> String {
        serde_json::from_str::<Value>(&self.body)
            .ok()
            .and_then(|v| v["choices"][0]["message"]["content"].as_str().map(String::from))
            .unwrap_or_else(|| self.body.clone())
    }
}

pub fn request_body(prompt: &str, model: &str) -> Value {
    json!({
        "model": model,
        "temperature": 0,
        "messages": [{"role": "user", "content": prompt}],
    })
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// POST one prompt. 429 and 5xx responses and transport errors are retried
/// with doubling backoff up to `max_attempts`; 401 and 403 fail at once.
pub fn query_judge(prompt: &str, cfg: &JudgeConfig) -> Result<JudgeResponse, JudgeError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(cfg.timeout)
        .build()
        .map_err(|e| JudgeError::Unavailable {
            attempts: 0,
            reason: e.to_string(),
        })?;
    let body = request_body(prompt, &cfg.model);
    let started = Instant::now();
    let mut backoff = cfg.initial_backoff;
    let mut reason = String::new();
    let attempts = cfg.max_attempts.max(1);
    for attempt in 1..=attempts {
        match client.post(&cfg.endpoint).bearer_auth(&cfg.token).json(&body).send() {
            Ok(resp) => {
                let status = resp.status().as_u16();
                if status == 401 || status == 403 {
                    return Err(JudgeError::Auth(status));
                }
                let text = resp.text().unwrap_or_default();
                if (200..300).contains(&status) {
                    return Ok(JudgeResponse {
                        body: text,
                        status,
                        attempts: attempt,
                        latency_ms: started.elapsed().as_millis(),
                    });
                }
                reason = format!("HTTP {status}: {}", text.chars().take(200).collect::<String>());
                if !retryable(status) {
                    return Err(JudgeError::Unavailable { attempts: attempt, reason });
                }
            }
            Err(e) => reason = e.to_string(),
        }
        if attempt < attempts {
            log::warn!("judge attempt {attempt} failed ({reason}); retrying in {backoff:?}");
            std::thread::sleep(backoff);
            backoff *= 2;
        }
    }
    Err(JudgeError::Unavailable { attempts, reason })
}

#[derive(Serialize)]
struct LogEntry<'a> {
    pattern_ref: &'a str,
    model: &'a str,
    request: &'a Value,
    status: Option<u16>,
    attempts: Option<usize>,
    latency_ms: Option<u128>,
    response: Option<&'a str>,
    error: Option<String>,
}

/// Judge every pattern with at most `cfg.concurrency` requests in flight.
/// Verdicts come back ordered by pattern_ref. An item whose request fails
/// after retries is recorded as unparseable; credential errors abort.
pub fn judge_pool(
    patterns: &[&PatternStats],
    rubric: &str,
    cfg: &JudgeConfig,
    log_path: Option<&Path>,
) -> Result<Vec<JudgeVerdict>, JudgeError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency.max(1))
        .build()
        .map_err(|e| JudgeError::Config(e.to_string()))?;
    let mut sorted: Vec<&PatternStats> = patterns.to_vec();
    sorted.sort_by_key(|p| p.pattern_ref());
    let results: Vec<(String, Value, Result<JudgeResponse, JudgeError>)> = pool.install(|| {
        sorted
            .par_iter()
            .map(|p| {
                let prompt = build_prompt(p, rubric);
                let req = request_body(&prompt, &cfg.model);
                (p.pattern_ref(), req, query_judge(&prompt, cfg))
            })
            .collect()
    });

    let mut log = match log_path {
        Some(path) => Some(BufWriter::new(
            File::create(path).map_err(|e| slicemine_core::Error::io(path, e))?,
        )),
        None => None,
    };
    let mut verdicts = Vec::with_capacity(results.len());
    for (pattern_ref, req, res) in &results {
        if let Err(JudgeError::Auth(code)) = res {
            return Err(JudgeError::Auth(*code));
        }
        let (entry, verdict) = match res {
            Ok(r) => {
                let content = r.content();
                let v = parse_verdict(pattern_ref, &cfg.model, &content);
                let entry = LogEntry {
                    pattern_ref,
                    model: &cfg.model,
                    request: req,
                    status: Some(r.status),
                    attempts: Some(r.attempts),
                    latency_ms: Some(r.latency_ms),
                    response: Some(&r.body),
                    error: None,
                };
                (serde_json::to_string(&entry), v)
            }
            Err(e) => {
                let v = JudgeVerdict {
                    pattern_ref: pattern_ref.clone(),
                    model_name: cfg.model.clone(),
                    extraction_worthy: None,
                    mechanism: None,
                    raw_response: String::new(),
                    parse_ok: false,
                };
                let entry = LogEntry {
                    pattern_ref,
                    model: &cfg.model,
                    request: req,
                    status: None,
                    attempts: None,
                    latency_ms: None,
                    response: None,
                    error: Some(e.to_string()),
                };
                (serde_json::to_string(&entry), v)
            }
        };
        if let (Some(w), Ok(line)) = (log.as_mut(), entry) {
            writeln!(w, "{line}").map_err(|e| slicemine_core::Error::io(log_path.unwrap(), e))?;
        }
        verdicts.push(verdict);
    }
    if let (Some(mut w), Some(path)) = (log, log_path) {
        w.flush().map_err(|e| slicemine_core::Error::io(path, e))?;
    }
    Ok(verdicts)
}
