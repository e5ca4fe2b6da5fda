//! Auxiliary vision signals (celebrity faces, logos, OCR, generic
//! descriptions) consumed by the Level-2 prompt.
//!
//! Only fixture-backed stubs and a thin HTTP client ship here; both sit
//! behind the [`Annotator`] trait.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ImageAsset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnnotationKind {
    Celebrity,
    Logo,
    OcrText,
    GenericCaption,
}

impl fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationKind::Celebrity => "CELEBRITY",
            AnnotationKind::Logo => "LOGO",
            AnnotationKind::OcrText => "OCR_TEXT",
            AnnotationKind::GenericCaption => "GENERIC_CAPTION",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxAnnotation {
    pub kind: AnnotationKind,
    pub payload: String,
    pub score: f64,
}

impl AuxAnnotation {
    pub fn new(kind: AnnotationKind, payload: impl Into<String>, score: f64) -> Self {
        Self {
            kind,
            payload: payload.into(),
            score,
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.payload.trim().is_empty() && (0.0..=1.0).contains(&self.score)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AnnotatorError {
    #[error("unreadable image {source_id}: {detail}")]
    Input { source_id: String, detail: String },
    #[error("annotator temporarily unavailable: {0}")]
    Retriable(String),
    #[error("annotator failed: {0}")]
    Permanent(String),
}

impl AnnotatorError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, AnnotatorError::Retriable(_))
    }
}

#[async_trait]
pub trait Annotator: Send + Sync {
    fn name(&self) -> &str;
    async fn annotate(&self, image: &ImageAsset) -> Result<Vec<AuxAnnotation>, AnnotatorError>;
}

fn ensure_readable(image: &ImageAsset) -> Result<(), AnnotatorError> {
    image
        .check_readable()
        .map(|_| ())
        .map_err(|detail| AnnotatorError::Input {
            source_id: image.source_id.clone(),
            detail,
        })
}

/// Annotation fixtures keyed by `source_id`.
pub type AnnotationFixtures = HashMap<String, Vec<AuxAnnotation>>;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("failed to read fixture {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("failed to parse fixture {0}: {1}")]
    Parse(String, #[source] serde_json::Error),
    #[error("fixture entry for {source_id} is invalid: {detail}")]
    Invalid { source_id: String, detail: String },
}

pub fn load_fixtures(path: &Path) -> Result<AnnotationFixtures, FixtureError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FixtureError::Io(path.display().to_string(), e))?;
    let fixtures: AnnotationFixtures = serde_json::from_str(&text)
        .map_err(|e| FixtureError::Parse(path.display().to_string(), e))?;
    for (id, list) in &fixtures {
        if let Some(bad) = list.iter().find(|a| !a.is_valid()) {
            return Err(FixtureError::Invalid {
                source_id: id.clone(),
                detail: format!("{bad:?}"),
            });
        }
    }
    Ok(fixtures)
}

/// Deterministic stub: returns the fixture list for the image's `source_id`
/// (optionally restricted to one kind), or nothing for unknown ids.
#[derive(Debug, Clone)]
pub struct FixtureAnnotator {
    name: String,
    fixtures: Arc<AnnotationFixtures>,
    kind: Option<AnnotationKind>,
}

impl FixtureAnnotator {
    pub fn new(name: impl Into<String>, fixtures: Arc<AnnotationFixtures>) -> Self {
        Self {
            name: name.into(),
            fixtures,
            kind: None,
        }
    }

    pub fn only(mut self, kind: AnnotationKind) -> Self {
        self.kind = Some(kind);
        self
    }
}

#[async_trait]
impl Annotator for FixtureAnnotator {
    fn name(&self) -> &str {
        &self.name
    }

    async fn annotate(&self, image: &ImageAsset) -> Result<Vec<AuxAnnotation>, AnnotatorError> {
        ensure_readable(image)?;
        Ok(self
            .fixtures
            .get(&image.source_id)
            .map(|list| {
                list.iter()
                    .filter(|a| self.kind.is_none_or(|k| a.kind == k))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteAnnotatorConfig {
    pub base_url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_ms() -> u64 {
    5_000
}
fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    100
}

impl RemoteAnnotatorConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

#[derive(Serialize)]
struct AnnotateRequest<'a> {
    source_id: &'a str,
    image_base64: String,
}

/// Client for an external annotation service.
///
/// `POST {base_url}/annotate` with `{"source_id", "image_base64"}`; the
/// service answers with a JSON array of annotations. 5xx, 429, timeouts
/// and connection failures are retried with exponential backoff; other
/// statuses are permanent.
pub struct RemoteAnnotator {
    name: String,
    cfg: RemoteAnnotatorConfig,
    client: reqwest::Client,
}

impl RemoteAnnotator {
    pub fn new(name: impl Into<String>, cfg: RemoteAnnotatorConfig) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .expect("reqwest client builds");
        Self {
            name: name.into(),
            cfg,
            client,
        }
    }

    async fn attempt(&self, image: &ImageAsset) -> Result<Vec<AuxAnnotation>, AnnotatorError> {
        let url = format!("{}/annotate", self.cfg.base_url.trim_end_matches('/'));
        let body = AnnotateRequest {
            source_id: &image.source_id,
            image_base64: base64::engine::general_purpose::STANDARD.encode(&image.bytes),
        };
        let resp = self
            .client
            .post(url)
            .json(&body)
            .send()
            .await
            .map_err(|e| AnnotatorError::Retriable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(AnnotatorError::Retriable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(AnnotatorError::Permanent(format!("status {status}")));
        }
        let list: Vec<AuxAnnotation> = resp
            .json()
            .await
            .map_err(|e| AnnotatorError::Permanent(format!("bad response body: {e}")))?;
        Ok(list.into_iter().filter(AuxAnnotation::is_valid).collect())
    }
}

#[async_trait]
impl Annotator for RemoteAnnotator {
    fn name(&self) -> &str {
        &self.name
    }

    async fn annotate(&self, image: &ImageAsset) -> Result<Vec<AuxAnnotation>, AnnotatorError> {
        ensure_readable(image)?;
        let mut attempt = 0;
        loop {
            match self.attempt(image).await {
                Err(e) if e.is_retriable() && attempt < self.cfg.retries => {
                    let delay = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
                    tracing::debug!(annotator = %self.name, attempt, "retrying after {delay} ms: {e}");
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Outcome of running every annotator on one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationRun {
    pub lists: Vec<Vec<AuxAnnotation>>,
    pub failures: Vec<(String, String)>,
}

/// Runs all annotators concurrently. An annotator that errors or exceeds
/// `timeout` contributes nothing; the failure is logged and recorded.
pub async fn run_annotators(
    annotators: &[Arc<dyn Annotator>],
    image: &ImageAsset,
    timeout: Duration,
) -> AnnotationRun {
    let tasks = annotators.iter().map(|a| {
        let a = Arc::clone(a);
        async move {
            let name = a.name().to_string();
            let out = tokio::time::timeout(timeout, a.annotate(image)).await;
            (name, out)
        }
    });
    let mut run = AnnotationRun::default();
    for (name, out) in join_all(tasks).await {
        match out {
            Ok(Ok(list)) => run.lists.push(list),
            Ok(Err(e)) => {
                tracing::warn!(annotator = %name, source_id = %image.source_id, "annotator failed: {e}");
                run.failures.push((name, e.to_string()));
            }
            Err(_) => {
                tracing::warn!(annotator = %name, source_id = %image.source_id, "annotator timed out");
                run.failures.push((name, "timed out".to_string()));
            }
        }
    }
    run
}

/// Serializes annotations into the Level-2 context block: one
/// `KIND: payload (score=S.SS)` line each, ordered by kind, then
/// descending score, then payload.
pub fn merge_annotations(lists: &[Vec<AuxAnnotation>]) -> String {
    let mut all: Vec<&AuxAnnotation> = lists.iter().flatten().collect();
    all.sort_by(|a, b| {
        a.kind
            .cmp(&b.kind)
            .then(b.score.total_cmp(&a.score))
            .then_with(|| a.payload.cmp(&b.payload))
    });
    all.iter()
        .map(|a| format!("{}: {} (score={:.2})", a.kind, a.payload, a.score))
        .collect::<Vec<_>>()
        .join("\n")
}
