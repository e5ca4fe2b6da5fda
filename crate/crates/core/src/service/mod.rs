//! Long-running service: bounded job queue, HTTP routes, batch mode,
//! layered configuration and metrics.

pub mod batch;
pub mod config;
pub mod http;
pub mod metrics;
pub mod queue;

pub use batch::{run_batch, BatchOutcome, BatchStatus, BatchSummary};
pub use config::{Backpressure, Components, ConfigError, PartialConfig, ServiceConfig};
pub use http::{router, serve};
pub use metrics::{Metrics, ThroughputSample};
pub use queue::{JobStatus, JobView, QueueOptions, Service, SubmitError};
