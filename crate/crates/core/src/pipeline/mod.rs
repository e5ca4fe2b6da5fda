//! Two-level captioning pipeline.
//!
//! ```text
//! image + metadata ──► Level-1 (team, jersey, confidence) ──► roster resolve ──► HIGH filter ─┐
//!        │                                                                                    ├─► Level-2 caption ──► parse/repair ──► validate
//!        └──────────► auxiliary annotators (faces, logos, OCR, description) ──► context block ┘
//! ```
//!
//! A failing stage never aborts the process: [`run_pipeline`] always returns
//! a [`PipelineResult`] with the error recorded against the stage name.

pub mod backend;
pub mod prompt;
pub mod response;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::annotate::{merge_annotations, run_annotators, Annotator};
use crate::caption::{self, CaptionParts, ValidationReport, DEFAULT_CREDIT_PREFIX};
use crate::domain::{Confidence, EntityDetection, ImageAsset, ImageMetadata, ResolvedEntity};
use crate::roster::RosterSet;

pub use backend::{
    backend_from_spec, Backend, BackendError, InferenceRequest, Level, MockScript,
    RemoteBackend, RemoteBackendConfig, Scripted, ScriptedBackend,
};
pub use prompt::{build_level1_prompt, build_level2_prompt, NO_IDENTIFIED_PLAYERS};
pub use response::{
    format_level1_lines, parse_level1_line, parse_level1_response, parse_level2_response,
    Level1ParseError, Level2Parse, UnparseableCaption,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Re-asks allowed per level after a parse failure or transient backend error.
    pub retries: u32,
    /// Refuse to build a Level-1 prompt without rosters.
    pub strict_roster: bool,
    pub level1_max_tokens: u32,
    pub level2_max_tokens: u32,
    pub temperature: f32,
    pub credit_prefix: String,
    pub annotator_timeout_ms: u64,
    /// Base delay before retrying a transient backend error; doubles per attempt.
    pub backoff_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retries: 2,
            strict_roster: true,
            level1_max_tokens: 128,
            level2_max_tokens: 256,
            temperature: 0.0,
            credit_prefix: DEFAULT_CREDIT_PREFIX.to_string(),
            annotator_timeout_ms: 2_000,
            backoff_ms: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Level1,
    Annotate,
    Resolve,
    Level2,
    Validate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Level1 => "level1",
            Stage::Annotate => "annotate",
            Stage::Resolve => "resolve",
            Stage::Level2 => "level2",
            Stage::Validate => "validate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.message)
    }
}

/// Per-image trace of every intermediate product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub source_id: String,
    pub level1_raw: String,
    pub detections: Vec<EntityDetection>,
    pub resolved: Vec<ResolvedEntity>,
    pub aux_block: String,
    pub level2_raw: String,
    pub caption: Option<CaptionParts>,
    /// The composed caption text, present with `caption`.
    pub caption_text: Option<String>,
    pub level2_repaired: bool,
    pub validation: Option<ValidationReport>,
    /// Wall-clock milliseconds per executed stage.
    pub timings: BTreeMap<Stage, f64>,
    pub backend_calls: u32,
    pub error: Option<StageError>,
}

impl PipelineResult {
    pub fn new(source_id: &str) -> Self {
        Self {
            source_id: source_id.to_string(),
            level1_raw: String::new(),
            detections: Vec::new(),
            resolved: Vec::new(),
            aux_block: String::new(),
            level2_raw: String::new(),
            caption: None,
            caption_text: None,
            level2_repaired: false,
            validation: None,
            timings: BTreeMap::new(),
            backend_calls: 0,
            error: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Entities that may appear in the caption under the default policy.
    pub fn allowed_entities(&self) -> Vec<ResolvedEntity> {
        allowed_entities(&self.resolved)
    }

    fn fail(mut self, stage: Stage, message: impl Into<String>) -> Self {
        self.error = Some(StageError {
            stage,
            message: message.into(),
        });
        self
    }
}

/// Default Level-2 entity policy: HIGH confidence and resolved on the roster.
pub fn allowed_entities(resolved: &[ResolvedEntity]) -> Vec<ResolvedEntity> {
    resolved
        .iter()
        .filter(|e| e.detection.confidence == Confidence::High && e.is_resolved())
        .cloned()
        .collect()
}

/// The two model levels.
#[derive(Clone)]
pub struct Backends {
    pub level1: Arc<dyn Backend>,
    pub level2: Arc<dyn Backend>,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1_000.0
}

enum Attempt<T> {
    Done(T),
    Failed(String),
}

/// Calls `backend` up to `1 + retries` times until `parse` accepts the
/// output. Transient backend errors back off exponentially; permanent
/// ones stop immediately. Returns the last raw text alongside the outcome.
async fn ask_with_retries<T, E: fmt::Display>(
    backend: &dyn Backend,
    request: &InferenceRequest,
    cfg: &PipelineConfig,
    calls: &mut u32,
    mut parse: impl FnMut(&str) -> Result<T, E>,
) -> (String, Attempt<T>) {
    let mut req = request.clone();
    let mut last_raw = String::new();
    let mut last_err = String::new();
    for attempt in 0..=cfg.retries {
        *calls += 1;
        match backend.generate(&req).await {
            Ok(raw) => match parse(&raw) {
                Ok(v) => return (raw, Attempt::Done(v)),
                Err(e) => {
                    last_err = format!("unparseable response: {e}");
                    req.user_text = format!(
                        "{}\n\nYour previous answer could not be parsed ({e}). Answer again in the required format.",
                        request.user_text
                    );
                    last_raw = raw;
                }
            },
            Err(e) if e.is_retriable() => {
                last_err = e.to_string();
                if attempt < cfg.retries && cfg.backoff_ms > 0 {
                    let delay = cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                }
            }
            Err(e) => return (last_raw, Attempt::Failed(e.to_string())),
        }
    }
    let msg = format!("{last_err} (after {} attempts)", cfg.retries + 1);
    (last_raw, Attempt::Failed(msg))
}

/// Runs both levels for one image and records every intermediate.
pub async fn run_pipeline(
    image: &ImageAsset,
    meta: &ImageMetadata,
    rosters: &RosterSet,
    backends: &Backends,
    annotators: &[Arc<dyn Annotator>],
    cfg: &PipelineConfig,
) -> PipelineResult {
    let mut result = PipelineResult::new(&meta.source_id);

    let t = Instant::now();
    let readable = image.check_readable();
    result.timings.insert(Stage::Ingest, elapsed_ms(t));
    if let Err(e) = readable {
        return result.fail(Stage::Ingest, format!("unreadable image: {e}"));
    }

    let level1_req = match build_level1_prompt(meta, rosters, cfg) {
        Ok(r) => r.with_image(Arc::clone(&image.bytes)),
        Err(e) => return result.fail(Stage::Level1, e.to_string()),
    };

    let mut calls = 0u32;
    let annotate = async {
        let t = Instant::now();
        let run = run_annotators(
            annotators,
            image,
            Duration::from_millis(cfg.annotator_timeout_ms),
        )
        .await;
        (run, elapsed_ms(t))
    };
    let level1 = async {
        let t = Instant::now();
        let out = ask_with_retries(
            backends.level1.as_ref(),
            &level1_req,
            cfg,
            &mut calls,
            parse_level1_response,
        )
        .await;
        (out, elapsed_ms(t))
    };
    let ((annotation_run, annotate_ms), ((level1_raw, level1_outcome), level1_ms)) =
        tokio::join!(annotate, level1);
    result.timings.insert(Stage::Level1, level1_ms);
    result.timings.insert(Stage::Annotate, annotate_ms);
    result.backend_calls = calls;
    result.level1_raw = level1_raw;
    match level1_outcome {
        Attempt::Done(ds) => result.detections = ds,
        Attempt::Failed(msg) => return result.fail(Stage::Level1, msg),
    }

    let t = Instant::now();
    result.resolved = result.detections.iter().map(|d| rosters.resolve(d)).collect();
    let allowed = allowed_entities(&result.resolved);
    result.timings.insert(Stage::Resolve, elapsed_ms(t));

    result.aux_block = merge_annotations(&annotation_run.lists);
    let level2_req = build_level2_prompt(meta, rosters, &allowed, &result.aux_block, cfg)
        .with_image(Arc::clone(&image.bytes));
    let t = Instant::now();
    let mut calls = result.backend_calls;
    let (level2_raw, level2_outcome) = ask_with_retries(
        backends.level2.as_ref(),
        &level2_req,
        cfg,
        &mut calls,
        |raw| parse_level2_response(raw, meta, &cfg.credit_prefix),
    )
    .await;
    result.timings.insert(Stage::Level2, elapsed_ms(t));
    result.backend_calls = calls;
    result.level2_raw = level2_raw;
    let parsed = match level2_outcome {
        Attempt::Done(p) => p,
        Attempt::Failed(msg) => return result.fail(Stage::Level2, msg),
    };

    let t = Instant::now();
    let report = caption::validate_parts(&parsed.parts, meta, &allowed);
    result.caption_text = caption::compose(&parsed.parts).ok();
    result.level2_repaired = parsed.repaired;
    result.caption = Some(parsed.parts);
    result.validation = Some(report);
    result.timings.insert(Stage::Validate, elapsed_ms(t));
    result
}
