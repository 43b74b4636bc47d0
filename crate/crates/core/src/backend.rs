//! Text generation backends.
//!
//! [`StubBackend`] answers from a lookup table and is what the tests and the
//! oracle pipeline run on. [`RemoteBackend`] talks to an inference service:
//!
//! ```text
//! POST <endpoint>/generate
//! {"inputs": [...], "decoding": {"strategy": "topk_nucleus", "top_k": 20,
//!                                "top_p": 0.95, "max_new_tokens": 128, "seed": 1}}
//! -> {"outputs": [...]}
//! ```
//!
//! Sampling fields are omitted for greedy decoding and `seed` is omitted when
//! unset. The same service accepts fine-tuning jobs at `POST /train`.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::ModelInput;
use crate::http::{with_retry, Attempt, RetryPolicy};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid decoding config: {0}")]
    Config(String),
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server rejected request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    /// Top-k filtering followed by nucleus sampling inside the top k.
    #[default]
    TopkNucleus,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "greedy" => Ok(Strategy::Greedy),
            "topk_nucleus" | "sample" => Ok(Strategy::TopkNucleus),
            other => Err(format!("unknown decoding strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    pub strategy: Strategy,
    pub top_k: u32,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::TopkNucleus,
            top_k: 20,
            top_p: 0.95,
            max_new_tokens: 128,
            seed: None,
        }
    }
}

impl DecodingConfig {
    pub fn greedy() -> Self {
        Self {
            strategy: Strategy::Greedy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::Config(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.top_k < 1 {
            return Err(BackendError::Config("top_k must be at least 1".into()));
        }
        if self.max_new_tokens < 1 {
            return Err(BackendError::Config(
                "max_new_tokens must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Anything that turns a batch of inputs into a position-aligned batch of outputs.
pub trait GenerationBackend: Send + Sync {
    fn generate(
        &self,
        inputs: &[String],
        cfg: &DecodingConfig,
    ) -> Result<Vec<String>, BackendError>;
}

/// One line of the generation artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub id: String,
    pub input: String,
    pub output: String,
}

// ---------------------------------------------------------------------------
// Stub
// ---------------------------------------------------------------------------

/// Table lookup; inputs missing from the table produce an empty string.
#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    table: HashMap<String, String>,
}

impl StubBackend {
    pub fn new(table: HashMap<String, String>) -> Self {
        Self { table }
    }

    /// Maps every input to its own gold target. When an input repeats (for
    /// example after augmentation) the first target wins.
    pub fn oracle(items: &[ModelInput]) -> Self {
        let mut table = HashMap::new();
        for m in items {
            table
                .entry(m.input.clone())
                .or_insert_with(|| m.target.clone());
        }
        Self { table }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

pub fn stub_generate(inputs: &[String], table: &HashMap<String, String>) -> Vec<String> {
    inputs
        .iter()
        .map(|i| table.get(i).cloned().unwrap_or_default())
        .collect()
}

impl GenerationBackend for StubBackend {
    fn generate(
        &self,
        inputs: &[String],
        _cfg: &DecodingConfig,
    ) -> Result<Vec<String>, BackendError> {
        Ok(stub_generate(inputs, &self.table))
    }
}

// ---------------------------------------------------------------------------
// Remote
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct WireDecoding {
    strategy: Strategy,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_p: Option<f64>,
    max_new_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct GenerateRequest<'a> {
    inputs: &'a [String],
    decoding: WireDecoding,
}

#[derive(Debug, Deserialize)]
struct GenerateResponse {
    outputs: Vec<String>,
}

/// Serializes the `/generate` request body.
pub fn generate_request_body(inputs: &[String], cfg: &DecodingConfig) -> String {
    let sampling = cfg.strategy == Strategy::TopkNucleus;
    let req = GenerateRequest {
        inputs,
        decoding: WireDecoding {
            strategy: cfg.strategy,
            top_k: sampling.then_some(cfg.top_k),
            top_p: sampling.then_some(cfg.top_p),
            max_new_tokens: cfg.max_new_tokens,
            seed: cfg.seed,
        },
    };
    serde_json::to_string(&req).expect("request body serializes")
}

/// Fine-tuning job forwarded to the inference service. The pipeline never
/// interprets these values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainJob {
    pub train_file: String,
    pub val_file: String,
    pub learning_rate: f64,
    pub epochs: u32,
    pub max_source_length: u32,
    pub max_target_length: u32,
    pub batch_size: u32,
    pub scheduler: String,
    pub optimizer: String,
    pub seed: u64,
}

impl Default for TrainJob {
    fn default() -> Self {
        Self {
            train_file: String::new(),
            val_file: String::new(),
            learning_rate: 8e-5,
            epochs: 10,
            max_source_length: 1024,
            max_target_length: 128,
            batch_size: 16,
            scheduler: "linear".into(),
            optimizer: "adamw".into(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct TrainSubmitted {
    pub job_id: String,
}

/// Counting semaphore capping concurrent requests.
#[derive(Debug)]
struct InFlight {
    cap: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            busy: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut busy = self.busy.lock().unwrap_or_else(|p| p.into_inner());
        while *busy >= self.cap {
            busy = self.freed.wait(busy).unwrap_or_else(|p| p.into_inner());
        }
        *busy += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut busy = self.0.busy.lock().unwrap_or_else(|p| p.into_inner());
        *busy -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteOptions {
    pub max_batch: usize,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            max_batch: 32,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// HTTP client for the inference service. Safe to share between threads;
/// at most `max_in_flight` requests are outstanding at once.
pub struct RemoteBackend {
    http: reqwest::blocking::Client,
    endpoint: String,
    opts: RemoteOptions,
    in_flight: InFlight,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, opts: RemoteOptions) -> Result<Self, BackendError> {
        if opts.max_batch == 0 {
            return Err(BackendError::Config("max_batch must be at least 1".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(opts.retry.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            http,
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            opts,
            in_flight: InFlight::new(opts.max_in_flight),
        })
    }

    fn post_json(&self, path: &str, body: String) -> Result<String, BackendError> {
        let url = format!("{}{}", self.endpoint, path);
        let _permit = self.in_flight.acquire();
        let result = with_retry(&self.opts.retry, || {
            let resp = self
                .http
                .post(&url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone())
                .send()
                .map_err(|e| {
                    Attempt::Transient(BackendError::Transport {
                        attempts: 0,
                        message: e.to_string(),
                    })
                })?;
            read_body(resp)
        });
        result.map_err(|(e, attempts)| match e {
            BackendError::Transport { message, .. } => {
                BackendError::Transport { attempts, message }
            }
            other => other,
        })
    }

    fn get_json(&self, path: &str) -> Result<String, BackendError> {
        let url = format!("{}{}", self.endpoint, path);
        let _permit = self.in_flight.acquire();
        with_retry(&self.opts.retry, || {
            let resp = self.http.get(&url).send().map_err(|e| {
                Attempt::Transient(BackendError::Transport {
                    attempts: 0,
                    message: e.to_string(),
                })
            })?;
            read_body(resp)
        })
        .map_err(|(e, attempts)| match e {
            BackendError::Transport { message, .. } => {
                BackendError::Transport { attempts, message }
            }
            other => other,
        })
    }

    fn generate_batch(
        &self,
        inputs: &[String],
        cfg: &DecodingConfig,
    ) -> Result<Vec<String>, BackendError> {
        let body = self.post_json("/generate", generate_request_body(inputs, cfg))?;
        let resp: GenerateResponse = serde_json::from_str(&body)
            .map_err(|e| BackendError::Protocol(format!("bad /generate response: {e}")))?;
        if resp.outputs.len() != inputs.len() {
            return Err(BackendError::Protocol(format!(
                "sent {} inputs but received {} outputs",
                inputs.len(),
                resp.outputs.len()
            )));
        }
        Ok(resp.outputs)
    }

    pub fn submit_training(&self, job: &TrainJob) -> Result<TrainSubmitted, BackendError> {
        let body = serde_json::to_string(job).expect("train job serializes");
        let resp = self.post_json("/train", body)?;
        serde_json::from_str(&resp)
            .map_err(|e| BackendError::Protocol(format!("bad /train response: {e}")))
    }

    pub fn training_status(&self, job_id: &str) -> Result<serde_json::Value, BackendError> {
        let resp = self.get_json(&format!("/train/{job_id}"))?;
        serde_json::from_str(&resp)
            .map_err(|e| BackendError::Protocol(format!("bad /train status: {e}")))
    }
}

fn read_body(resp: reqwest::blocking::Response) -> Result<String, Attempt<BackendError>> {
    let status = resp.status();
    let text = resp.text().map_err(|e| {
        Attempt::Transient(BackendError::Transport {
            attempts: 0,
            message: e.to_string(),
        })
    })?;
    if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
        return Err(Attempt::Transient(BackendError::Transport {
            attempts: 0,
            message: format!("HTTP {status}: {text}"),
        }));
    }
    if !status.is_success() {
        return Err(Attempt::Fatal(BackendError::Rejected {
            status: status.as_u16(),
            body: text,
        }));
    }
    Ok(text)
}

impl GenerationBackend for RemoteBackend {
    fn generate(
        &self,
        inputs: &[String],
        cfg: &DecodingConfig,
    ) -> Result<Vec<String>, BackendError> {
        cfg.validate()?;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.opts.max_batch) {
            out.extend(self.generate_batch(chunk, cfg)?);
        }
        Ok(out)
    }
}

/// `remote_generate` as a free function for one-off calls.
pub fn remote_generate(
    inputs: &[String],
    cfg: &DecodingConfig,
    endpoint: &str,
) -> Result<Vec<String>, BackendError> {
    RemoteBackend::new(endpoint, RemoteOptions::default())?.generate(inputs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_lookup_and_alignment() {
        let table = HashMap::from([
            ("a".to_string(), "A r B".to_string()),
            ("c".to_string(), "C r D".to_string()),
        ]);
        let stub = StubBackend::new(table);
        let out = stub
            .generate(
                &["a".into(), "missing".into(), "c".into()],
                &DecodingConfig::default(),
            )
            .unwrap();
        assert_eq!(
            out,
            vec!["A r B".to_string(), String::new(), "C r D".to_string()]
        );
    }

    #[test]
    fn oracle_prefers_first_target() {
        let items = vec![
            ModelInput {
                id: "1".into(),
                input: "x".into(),
                target: "first".into(),
                augmented: false,
            },
            ModelInput {
                id: "1#aug1".into(),
                input: "x".into(),
                target: "second".into(),
                augmented: true,
            },
        ];
        let stub = StubBackend::oracle(&items);
        assert_eq!(
            stub.generate(&["x".into()], &DecodingConfig::greedy())
                .unwrap(),
            vec!["first"]
        );
    }

    #[test]
    fn greedy_body_has_no_sampling_fields() {
        let body = generate_request_body(&["in".into()], &DecodingConfig::greedy());
        assert_eq!(
            body,
            r#"{"inputs":["in"],"decoding":{"strategy":"greedy","max_new_tokens":128}}"#
        );
    }

    #[test]
    fn sampling_body_carries_all_fields() {
        let cfg = DecodingConfig {
            seed: Some(7),
            ..DecodingConfig::default()
        };
        let body = generate_request_body(&["a".into(), "b".into()], &cfg);
        assert_eq!(
            body,
            r#"{"inputs":["a","b"],"decoding":{"strategy":"topk_nucleus","top_k":20,"top_p":0.95,"max_new_tokens":128,"seed":7}}"#
        );
    }

    #[test]
    fn decoding_invariants() {
        assert!(DecodingConfig::default().validate().is_ok());
        assert!(DecodingConfig {
            top_p: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DecodingConfig {
            top_p: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DecodingConfig {
            top_k: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DecodingConfig {
            max_new_tokens: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn train_job_defaults() {
        let j = TrainJob::default();
        assert_eq!(j.learning_rate, 8e-5);
        assert_eq!(j.epochs, 10);
        assert_eq!((j.max_source_length, j.max_target_length), (1024, 128));
        assert_eq!(
            (j.scheduler.as_str(), j.optimizer.as_str()),
            ("linear", "adamw")
        );
    }
}
