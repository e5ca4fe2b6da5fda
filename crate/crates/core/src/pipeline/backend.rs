//! Inference backends: the contract, a scripted mock, and a
//! chat-completion HTTP client.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Which of the two model levels a backend serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Level1,
    Level2,
}

/// Prompt side of one generate call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub system_text: String,
    pub user_text: String,
    pub image_ref: String,
    #[serde(skip)]
    pub image: Option<Arc<[u8]>>,
    pub max_tokens: u32,
    pub temperature: f32,
}

impl InferenceRequest {
    pub fn with_image(mut self, bytes: Arc<[u8]>) -> Self {
        self.image = Some(bytes);
        self
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// Connection failure, timeout, or a transient server status.
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    /// The backend answered but refused the request; retrying will not help.
    #[error("backend rejected request: {0}")]
    Rejected(String),
}

impl BackendError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Unreachable(_))
    }
}

/// A text generator standing in for one fine-tuned LVLM.
/// Implementations must tolerate concurrent `generate` calls.
#[async_trait]
pub trait Backend: Send + Sync {
    fn label(&self) -> &str;
    async fn generate(&self, req: &InferenceRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scripted {
    One(String),
    Sequence(Vec<String>),
}

impl Scripted {
    fn nth(&self, call: usize) -> Option<&str> {
        match self {
            Scripted::One(s) => Some(s),
            Scripted::Sequence(v) => v.get(call.min(v.len().saturating_sub(1))).map(String::as_str),
        }
    }
}

/// On-disk script for the mock backends.
///
/// ```json
/// {"delay_ms": 0,
///  "level1": {"img-001": "Team A (1) [HIGH]"},
///  "level2": {"img-001": ["first answer", "answer on re-ask"]}}
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default)]
    pub level1: HashMap<String, Scripted>,
    #[serde(default)]
    pub level2: HashMap<String, Scripted>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("failed to read mock script {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("failed to parse mock script {}: {e}", path.display()))
    }
}

/// Deterministic backend answering from a script keyed by `image_ref`.
/// The n-th call for a key returns the n-th scripted answer (the last one
/// repeats). Unknown keys are rejected.
pub struct ScriptedBackend {
    label: String,
    responses: HashMap<String, Scripted>,
    delay: Duration,
    calls: Mutex<HashMap<String, usize>>,
    total: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(label: impl Into<String>, responses: HashMap<String, Scripted>) -> Self {
        Self {
            label: label.into(),
            responses,
            delay: Duration::ZERO,
            calls: Mutex::new(HashMap::new()),
            total: AtomicUsize::new(0),
        }
    }

    pub fn from_script(script: &MockScript, level: Level) -> Self {
        let (label, map) = match level {
            Level::Level1 => ("mock-level1", &script.level1),
            Level::Level2 => ("mock-level2", &script.level2),
        };
        Self::new(label, map.clone()).with_delay(Duration::from_millis(script.delay_ms))
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn total_calls(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, image_ref: &str) -> usize {
        self.calls
            .lock()
            .unwrap()
            .get(image_ref)
            .copied()
            .unwrap_or(0)
    }
}

#[async_trait]
impl Backend for ScriptedBackend {
    fn label(&self) -> &str {
        &self.label
    }

    async fn generate(&self, req: &InferenceRequest) -> Result<String, BackendError> {
        self.total.fetch_add(1, Ordering::SeqCst);
        let call = {
            let mut calls = self.calls.lock().unwrap();
            let n = calls.entry(req.image_ref.clone()).or_insert(0);
            *n += 1;
            *n - 1
        };
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        self.responses
            .get(&req.image_ref)
            .and_then(|s| s.nth(call))
            .map(str::to_string)
            .ok_or_else(|| BackendError::Rejected(format!("no scripted response for {}", req.image_ref)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    pub base_url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

fn default_timeout_ms() -> u64 {
    60_000
}

impl RemoteBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: String::new(),
            timeout_ms: default_timeout_ms(),
            api_key: None,
        }
    }
}

/// Chat-completion client: `POST {base_url}/v1/chat/completions` with a
/// system message and a user message carrying the prompt text and the
/// image (inline base64 data URL when bytes are attached, otherwise the
/// `image_ref` as a URL).
pub struct RemoteBackend {
    label: String,
    cfg: RemoteBackendConfig,
    client: reqwest::Client,
}

impl RemoteBackend {
    pub fn new(label: impl Into<String>, cfg: RemoteBackendConfig) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .expect("reqwest client builds");
        Self {
            label: label.into(),
            cfg,
            client,
        }
    }

    pub fn request_body(&self, req: &InferenceRequest) -> serde_json::Value {
        let image_url = match &req.image {
            Some(bytes) => format!(
                "data:{};base64,{}",
                sniff_mime(bytes),
                base64::engine::general_purpose::STANDARD.encode(bytes)
            ),
            None => req.image_ref.clone(),
        };
        json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": [
                    {"type": "text", "text": req.user_text},
                    {"type": "image_url", "image_url": {"url": image_url}}
                ]}
            ],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        })
    }
}

fn sniff_mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        "image/png"
    } else {
        "image/jpeg"
    }
}

#[async_trait]
impl Backend for RemoteBackend {
    fn label(&self) -> &str {
        &self.label
    }

    async fn generate(&self, req: &InferenceRequest) -> Result<String, BackendError> {
        let url = format!(
            "{}/v1/chat/completions",
            self.cfg.base_url.trim_end_matches('/')
        );
        let mut builder = self.client.post(url).json(&self.request_body(req));
        if let Some(key) = &self.cfg.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder
            .send()
            .await
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Unreachable(format!("status {status}")));
        }
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(BackendError::Rejected(format!("status {status}: {text}")));
        }
        let body: serde_json::Value = resp
            .json()
            .await
            .map_err(|e| BackendError::Rejected(format!("invalid response body: {e}")))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Rejected("response has no message content".into()))
    }
}

/// Builds a backend from an endpoint spec: `mock:<script path>` or an
/// `http(s)://` base address.
pub fn backend_from_spec(spec: &str, level: Level) -> Result<Arc<dyn Backend>, String> {
    if let Some(path) = spec.strip_prefix("mock:") {
        let script = MockScript::load(Path::new(path))?;
        return Ok(Arc::new(ScriptedBackend::from_script(&script, level)));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        let mut cfg = RemoteBackendConfig::new(spec);
        cfg.api_key = std::env::var("CAPWIRE_API_KEY").ok();
        let label = match level {
            Level::Level1 => "remote-level1",
            Level::Level2 => "remote-level2",
        };
        return Ok(Arc::new(RemoteBackend::new(label, cfg)));
    }
    Err(format!(
        "endpoint {spec:?} must be \"mock:<path>\" or an http(s) address"
    ))
}
