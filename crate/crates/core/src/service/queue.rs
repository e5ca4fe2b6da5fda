//! Bounded job queue running the pipeline per submitted image.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{Notify, Semaphore};

use crate::domain::{FieldError, ImageAsset, ImageMetadata};
use crate::pipeline::{run_pipeline, PipelineResult};
use crate::roster::RosterSet;
use crate::service::config::{Backpressure, Components};
use crate::service::metrics::Metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<PipelineResult>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("invalid metadata: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    Invalid(Vec<FieldError>),
    #[error("all {0} worker slots are busy; retry later")]
    Busy(usize),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown job id {0}")]
pub struct NotFound(pub String);

struct JobEntry {
    status: JobStatus,
    result: Option<PipelineResult>,
    finished: Option<Instant>,
}

struct Inner {
    components: Components,
    rosters: RwLock<Arc<RosterSet>>,
    permits: Arc<Semaphore>,
    max_in_flight: usize,
    backpressure: Backpressure,
    ttl: Duration,
    jobs: Mutex<HashMap<String, JobEntry>>,
    next_id: AtomicU64,
    finished: Notify,
    metrics: Metrics,
}

/// Handle to the running service; cheap to clone.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

#[derive(Debug, Clone)]
pub struct QueueOptions {
    pub max_in_flight: usize,
    pub backpressure: Backpressure,
    pub ttl: Duration,
}

impl Default for QueueOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            backpressure: Backpressure::Block,
            ttl: Duration::from_secs(3_600),
        }
    }
}

impl Service {
    pub fn new(components: Components, opts: QueueOptions) -> Self {
        assert!(opts.max_in_flight >= 1, "max_in_flight must be at least 1");
        let rosters = RwLock::new(Arc::clone(&components.rosters));
        Self {
            inner: Arc::new(Inner {
                components,
                rosters,
                permits: Arc::new(Semaphore::new(opts.max_in_flight)),
                max_in_flight: opts.max_in_flight,
                backpressure: opts.backpressure,
                ttl: opts.ttl,
                jobs: Mutex::new(HashMap::new()),
                next_id: AtomicU64::new(1),
                finished: Notify::new(),
                metrics: Metrics::new(),
            }),
        }
    }

    pub fn metrics(&self) -> &Metrics {
        &self.inner.metrics
    }

    pub fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight
    }

    /// Atomically replaces the roster snapshot used by jobs started afterwards.
    pub fn replace_rosters(&self, rosters: RosterSet) {
        *self.inner.rosters.write().unwrap() = Arc::new(rosters);
    }

    /// Validates and enqueues one image. In `Block` mode this waits for a
    /// free worker slot; in `Reject` mode it fails with [`SubmitError::Busy`].
    pub async fn submit(&self, bytes: Vec<u8>, meta: ImageMetadata) -> Result<String, SubmitError> {
        meta.validate().map_err(SubmitError::Invalid)?;
        let inner = &self.inner;
        let permit = match inner.backpressure {
            Backpressure::Block => Arc::clone(&inner.permits)
                .acquire_owned()
                .await
                .expect("semaphore is never closed"),
            Backpressure::Reject => match Arc::clone(&inner.permits).try_acquire_owned() {
                Ok(p) => p,
                Err(_) => {
                    inner.metrics.record_rejected();
                    return Err(SubmitError::Busy(inner.max_in_flight));
                }
            },
        };
        let id = format!("job-{:08}", inner.next_id.fetch_add(1, Ordering::Relaxed));
        {
            let mut jobs = inner.jobs.lock().unwrap();
            purge_expired(&mut jobs, inner.ttl);
            jobs.insert(
                id.clone(),
                JobEntry {
                    status: JobStatus::Queued,
                    result: None,
                    finished: None,
                },
            );
        }
        inner.metrics.record_submitted();

        let inner = Arc::clone(&self.inner);
        let job_id = id.clone();
        let image = ImageAsset::new(meta.source_id.clone(), bytes);
        tokio::spawn(async move {
            let _permit = permit;
            let started = Instant::now();
            set_status(&inner, &job_id, JobStatus::Running);
            inner.metrics.job_started();
            let rosters = Arc::clone(&inner.rosters.read().unwrap());
            let c = &inner.components;
            let result = run_pipeline(&image, &meta, &rosters, &c.backends, &c.annotators, &c.pipeline).await;
            for (stage, ms) in &result.timings {
                inner.metrics.record_stage(*stage, *ms);
            }
            let ok = result.is_ok();
            if let Some(e) = &result.error {
                tracing::warn!(job = %job_id, source_id = %result.source_id, "{e}");
            }
            {
                let mut jobs = inner.jobs.lock().unwrap();
                if let Some(entry) = jobs.get_mut(&job_id) {
                    entry.status = if ok { JobStatus::Done } else { JobStatus::Failed };
                    entry.result = Some(result);
                    entry.finished = Some(Instant::now());
                }
            }
            inner.metrics.job_finished();
            inner
                .metrics
                .record_completion(started.elapsed().as_secs_f64() * 1_000.0, ok);
            inner.finished.notify_waiters();
        });
        Ok(id)
    }

    pub fn get_result(&self, id: &str) -> Result<JobView, NotFound> {
        let mut jobs = self.inner.jobs.lock().unwrap();
        purge_expired(&mut jobs, self.inner.ttl);
        jobs.get(id)
            .map(|e| JobView {
                id: id.to_string(),
                status: e.status,
                result: e.result.clone(),
            })
            .ok_or_else(|| NotFound(id.to_string()))
    }

    /// Waits until the job reaches DONE or FAILED.
    pub async fn wait(&self, id: &str) -> Result<JobView, NotFound> {
        loop {
            let notified = self.inner.finished.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            let view = self.get_result(id)?;
            if view.status.is_terminal() {
                return Ok(view);
            }
            notified.await;
        }
    }
}

fn set_status(inner: &Inner, id: &str, status: JobStatus) {
    if let Some(e) = inner.jobs.lock().unwrap().get_mut(id) {
        e.status = status;
    }
}

fn purge_expired(jobs: &mut HashMap<String, JobEntry>, ttl: Duration) {
    jobs.retain(|_, e| e.finished.is_none_or(|t| t.elapsed() <= ttl));
}
