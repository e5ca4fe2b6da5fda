//! Directory batch mode.
//!
//! Input: for every `<stem>.meta.json` a sibling image `<stem>.png`,
//! `<stem>.jpg` or `<stem>.jpeg`; optionally `ground_truth.jsonl` with one
//! [`GroundTruth`] per line.
//!
//! Output (in the configured output directory):
//! `<source_id>.txt` per captioned image, `results.jsonl` (input order),
//! `summary.json`, and `eval_report.json` when ground truth is present.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ImageMetadata;
use crate::eval::{align, evaluate_corpus, read_jsonl, EvalReport, GroundTruth};
use crate::pipeline::PipelineResult;
use crate::service::config::{ConfigError, ServiceConfig};
use crate::service::queue::{QueueOptions, Service, SubmitError};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("ground truth: {0}")]
    GroundTruth(String),
}

/// Overall result, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchStatus {
    AllOk,
    Partial,
    NoneOk,
}

impl BatchStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            BatchStatus::AllOk => 0,
            BatchStatus::Partial => 2,
            BatchStatus::NoneOk => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputProblem {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchSummary {
    pub status: BatchStatus,
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub input_problems: Vec<InputProblem>,
    pub elapsed_s: f64,
    pub images_per_second: f64,
    pub max_in_flight_observed: usize,
}

pub struct BatchOutcome {
    pub summary: BatchSummary,
    pub results: Vec<PipelineResult>,
    pub eval: Option<EvalReport>,
    pub output_dir: PathBuf,
}

struct Item {
    meta: ImageMetadata,
    bytes: Vec<u8>,
}

fn io_err(p: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |e| BatchError::Io(p.to_path_buf(), e)
}

fn safe_file_stem(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\', '\0'])
}

fn collect_inputs(dir: &Path) -> Result<(Vec<Item>, Vec<InputProblem>), BatchError> {
    let mut metas: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".meta.json"))
        .collect();
    metas.sort();

    let mut items = Vec::new();
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for meta_path in metas {
        let file = meta_path.file_name().unwrap().to_string_lossy().into_owned();
        let stem = file.trim_end_matches(".meta.json").to_string();
        let mut problem = |reason: String| {
            problems.push(InputProblem {
                file: file.clone(),
                reason,
            })
        };
        let meta: ImageMetadata = match std::fs::read(&meta_path)
            .map_err(|e| e.to_string())
            .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
        {
            Ok(m) => m,
            Err(e) => {
                problem(format!("unreadable metadata: {e}"));
                continue;
            }
        };
        if let Err(errs) = meta.validate() {
            let msgs: Vec<String> = errs.iter().map(ToString::to_string).collect();
            problem(format!("invalid metadata: {}", msgs.join(", ")));
            continue;
        }
        if !safe_file_stem(&meta.source_id) {
            problem(format!("source_id {:?} cannot be used as a file name", meta.source_id));
            continue;
        }
        if !seen.insert(meta.source_id.clone()) {
            problem(format!("duplicate source_id {:?}", meta.source_id));
            continue;
        }
        let image_path = IMAGE_EXTENSIONS
            .iter()
            .map(|ext| dir.join(format!("{stem}.{ext}")))
            .find(|p| p.is_file());
        let Some(image_path) = image_path else {
            problem(format!("no image file {stem}.{{png,jpg,jpeg}}"));
            continue;
        };
        match std::fs::read(&image_path) {
            Ok(bytes) => items.push(Item { meta, bytes }),
            Err(e) => problem(format!("cannot read {}: {e}", image_path.display())),
        }
    }
    Ok((items, problems))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), BatchError> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Captions every image in `input_dir`, writing outputs to
/// `cfg.output_dir`. Concurrency is bounded by `cfg.max_in_flight`; output
/// files do not depend on it.
pub async fn run_batch(input_dir: &Path, cfg: &ServiceConfig) -> Result<BatchOutcome, BatchError> {
    let components = cfg.build_components()?;
    let (items, input_problems) = collect_inputs(input_dir)?;
    let service = Service::new(
        components,
        QueueOptions {
            max_in_flight: cfg.max_in_flight,
            ttl: cfg.result_ttl(),
            ..QueueOptions::default()
        },
    );

    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;

    let started = Instant::now();
    let mut job_ids = Vec::with_capacity(items.len());
    for item in items {
        let source_id = item.meta.source_id.clone();
        match service.submit(item.bytes, item.meta).await {
            Ok(id) => job_ids.push(id),
            // Metadata was validated above and Block mode never reports busy.
            Err(e @ (SubmitError::Invalid(_) | SubmitError::Busy(_))) => {
                unreachable!("{source_id}: {e}")
            }
        }
    }
    let views = futures::future::join_all(job_ids.iter().map(|id| service.wait(id))).await;
    let elapsed = started.elapsed().as_secs_f64();
    let results: Vec<PipelineResult> = views
        .into_iter()
        .map(|v| {
            v.expect("jobs are retained for the batch duration")
                .result
                .expect("terminal jobs carry a result")
        })
        .collect();

    let mut jsonl = String::new();
    for r in &results {
        jsonl.push_str(&serde_json::to_string(r).expect("serialisable"));
        jsonl.push('\n');
        if let (true, Some(text)) = (r.is_ok(), &r.caption_text) {
            let p = out.join(format!("{}.txt", r.source_id));
            std::fs::write(&p, format!("{text}\n")).map_err(io_err(&p))?;
        }
    }
    let results_path = out.join("results.jsonl");
    std::fs::write(&results_path, jsonl).map_err(io_err(&results_path))?;

    let succeeded = results.iter().filter(|r| r.is_ok()).count();
    let total = results.len() + input_problems.len();
    let status = if succeeded == total && total > 0 {
        BatchStatus::AllOk
    } else if succeeded == 0 {
        BatchStatus::NoneOk
    } else {
        BatchStatus::Partial
    };
    let summary = BatchSummary {
        status,
        total,
        succeeded,
        failed: total - succeeded,
        input_problems,
        elapsed_s: elapsed,
        images_per_second: if elapsed > 0.0 { results.len() as f64 / elapsed } else { 0.0 },
        max_in_flight_observed: service.metrics().in_flight_peak(),
    };
    write_json(&out.join("summary.json"), &summary)?;

    let gt_path = input_dir.join(GROUND_TRUTH_FILE);
    let eval = if gt_path.is_file() {
        let truths: Vec<GroundTruth> =
            read_jsonl(&gt_path).map_err(|e| BatchError::GroundTruth(e.to_string()))?;
        let by_id: HashSet<&str> = results.iter().map(|r| r.source_id.as_str()).collect();
        let truths: Vec<GroundTruth> = truths
            .into_iter()
            .filter(|t| by_id.contains(t.source_id.as_str()))
            .collect();
        let pairs = align(results.clone(), truths).map_err(|e| BatchError::GroundTruth(e.to_string()))?;
        match evaluate_corpus(&pairs) {
            Ok(report) => {
                write_json(&out.join("eval_report.json"), &report)?;
                Some(report)
            }
            Err(e) => {
                tracing::warn!("skipping evaluation: {e}");
                None
            }
        }
    } else {
        None
    };

    Ok(BatchOutcome {
        summary,
        results,
        eval,
        output_dir: out,
    })
}
