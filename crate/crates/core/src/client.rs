//! Model completions from a recorded answers file or an HTTP endpoint.
//!
//! The wire format is a minimal completion POST: `{model, prompt,
//! max_tokens, temperature, stop}`. The response text is read from
//! `choices[0].text`, `choices[0].message.content`, `text` or
//! `generated_text`, whichever is present.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::eval::{AnswerSet, ModelAnswer, QaItem, RelationItem};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("environment variable {0} holding the auth token is not set")]
    MissingToken(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned status {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("prompt list is empty")]
    EmptyBatch,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ClientError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ClientError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionRequest {
    pub prompt: String,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

fn default_max_new_tokens() -> u32 {
    128
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_new_tokens: default_max_new_tokens(),
            temperature: 0.0,
            stop_sequences: Vec::new(),
        }
    }

    fn body(&self, model: &str) -> Value {
        let mut body = json!({
            "model": model,
            "prompt": self.prompt,
            "max_tokens": self.max_new_tokens,
            "temperature": self.temperature,
        });
        if !self.stop_sequences.is_empty() {
            body["stop"] = json!(self.stop_sequences);
        }
        body
    }
}

/// Endpoint settings. The auth token is never stored here, only the name of
/// the environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full URL the completion request is POSTed to.
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// First retry delay; doubles on every further retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_in_flight() -> usize {
    4
}
fn default_backoff() -> u64 {
    250
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            auth_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
            backoff_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_in_flight < 1 {
            return Err(ClientError::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(ClientError::Config("timeout_secs must be positive".into()));
        }
        if self.base_url.trim().is_empty() {
            return Err(ClientError::Config("base_url is empty".into()));
        }
        Ok(())
    }
}

/// Something that turns a request into completion text.
pub trait Completer: Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;
}

/// Blocking HTTP completer with retries and exponential backoff.
pub struct HttpCompleter {
    config: EndpointConfig,
    agent: ureq::Agent,
    token: Option<String>,
    retries: AtomicUsize,
}

impl HttpCompleter {
    pub fn new(config: EndpointConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::MissingToken(var.clone()))?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpCompleter {
            config,
            agent,
            token,
            retries: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Retries performed so far across all requests.
    pub fn retries(&self) -> usize {
        self.retries.load(Ordering::Relaxed)
    }

    fn attempt(&self, body: &Value) -> Result<Result<String, (u16, String)>, String> {
        let mut req = self.agent.post(&self.config.base_url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .header("Content-Type", "application/json")
            .send(body.to_string())
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if (200..300).contains(&status) {
            Ok(Ok(text))
        } else {
            Ok(Err((status, text)))
        }
    }
}

fn extract_text(body: &str) -> Result<String, ClientError> {
    let bad = |message: &str| ClientError::Protocol {
        status: 200,
        body: format!("{message}: {}", body.chars().take(200).collect::<String>()),
    };
    let v: Value = serde_json::from_str(body).map_err(|_| bad("response is not JSON"))?;
    let candidates = [
        v.pointer("/choices/0/text"),
        v.pointer("/choices/0/message/content"),
        v.get("text"),
        v.get("generated_text"),
        v.pointer("/0/generated_text"),
    ];
    let text = candidates
        .into_iter()
        .flatten()
        .find_map(Value::as_str)
        .map(str::to_string);
    text.ok_or_else(|| bad("no completion text in response"))
}

impl Completer for HttpCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let body = request.body(&self.config.model_name);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let retryable = match self.attempt(&body) {
                Ok(Ok(text)) => return extract_text(&text),
                Ok(Err((status, text))) if status == 429 || status >= 500 => {
                    ClientError::Protocol { status, body: text }
                }
                Ok(Err((status, text))) => return Err(ClientError::Protocol { status, body: text }),
                Err(message) => ClientError::Transport { attempts, message },
            };
            if attempts > self.config.max_retries {
                return Err(match retryable {
                    ClientError::Transport { message, .. } => ClientError::Transport { attempts, message },
                    other => other,
                });
            }
            self.retries.fetch_add(1, Ordering::Relaxed);
            let delay = self.config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
            log::warn!("completion attempt {attempts} failed ({retryable}); retrying in {delay} ms");
            std::thread::sleep(Duration::from_millis(delay));
        }
    }
}

/// Reads a line-delimited answers file. Duplicate keys keep the last answer;
/// the set's `duplicates` field counts them.
pub fn replay_answers(path: &Path) -> Result<AnswerSet, ClientError> {
    let file = std::fs::File::open(path).map_err(|e| ClientError::io(path, e))?;
    let mut answers = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ClientError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let a: ModelAnswer = serde_json::from_str(&line).map_err(|e| ClientError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        answers.push(a);
    }
    let set = AnswerSet::from_answers(answers);
    if set.duplicates > 0 {
        log::warn!(
            "{}: {} duplicate answer key(s), last one kept",
            path.display(),
            set.duplicates
        );
    }
    Ok(set)
}

/// One prompt to send: the answer is stored under (item_id, variant_index).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptJob {
    pub item_id: String,
    pub variant_index: u32,
    pub prompt: String,
}

pub fn jobs_for_qa(items: &[QaItem]) -> Vec<PromptJob> {
    items
        .iter()
        .map(|i| PromptJob {
            item_id: i.item_id.clone(),
            variant_index: 0,
            prompt: i.prompt_text.clone(),
        })
        .collect()
}

pub fn jobs_for_relation(items: &[RelationItem]) -> Vec<PromptJob> {
    items
        .iter()
        .flat_map(|i| {
            i.prompt_variants.iter().enumerate().map(|(v, p)| PromptJob {
                item_id: i.item_id.clone(),
                variant_index: v as u32,
                prompt: p.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BatchSummary {
    pub answered: usize,
    pub failed: usize,
}

/// Sends every job with at most `max_in_flight` requests outstanding, then
/// writes all answers sorted by (item_id, variant_index). Failed jobs are
/// written with an `error` field and empty text; the run continues.
pub fn run_batch(
    jobs: &[PromptJob],
    completer: &dyn Completer,
    template: &CompletionRequest,
    max_in_flight: usize,
    out_path: &Path,
) -> Result<BatchSummary, ClientError> {
    if jobs.is_empty() {
        return Err(ClientError::EmptyBatch);
    }
    if max_in_flight < 1 {
        return Err(ClientError::Config("max_in_flight must be at least 1".into()));
    }
    let file = std::fs::File::create(out_path).map_err(|e| ClientError::io(out_path, e))?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<ModelAnswer>> = Mutex::new(Vec::with_capacity(jobs.len()));
    std::thread::scope(|s| {
        for _ in 0..max_in_flight.min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let request = CompletionRequest {
                    prompt: job.prompt.clone(),
                    ..template.clone()
                };
                let (raw_text, error) = match completer.complete(&request) {
                    Ok(t) => (t, None),
                    Err(e) => (String::new(), Some(e.to_string())),
                };
                results.lock().unwrap().push(ModelAnswer {
                    item_id: job.item_id.clone(),
                    variant_index: job.variant_index,
                    raw_text,
                    error,
                });
            });
        }
    });
    let mut answers = results.into_inner().unwrap();
    answers.sort_by(|a, b| (&a.item_id, a.variant_index).cmp(&(&b.item_id, b.variant_index)));
    let mut w = BufWriter::new(file);
    let mut summary = BatchSummary::default();
    for a in &answers {
        if a.error.is_some() {
            summary.failed += 1;
        } else {
            summary.answered += 1;
        }
        serde_json::to_writer(&mut w, a).map_err(|e| ClientError::io(out_path, e.into()))?;
        w.write_all(b"\n").map_err(|e| ClientError::io(out_path, e))?;
    }
    w.flush().map_err(|e| ClientError::io(out_path, e))?;
    Ok(summary)
}
