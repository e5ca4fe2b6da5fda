//! Stylized sports captioning for wire-service photos.
//!
//! A two-level model pipeline: a Level-1 model labels visible players by
//! team and jersey number with a HIGH/LOW confidence, the labels are mapped
//! to names through team rosters, and a Level-2 model writes the caption in
//! the four-segment house style (`date; location; body credit`). All model
//! inference sits behind [`pipeline::Backend`].
//!
//! Modules:
//! - [`domain`]: shared types and date/team normalization
//! - [`caption`]: caption grammar (compose, parse, validate)
//! - [`roster`]: roster loading and deterministic player resolution
//! - [`annotate`]: auxiliary vision annotators and context-block merging
//! - [`pipeline`]: prompts, backends, response parsing, orchestration
//! - [`dataset`]: SFT record construction, export and validation
//! - [`eval`]: entity F1, token F1 and corpus reports
//! - [`service`]: job queue, metrics, HTTP API and batch mode

pub mod annotate;
pub mod caption;
pub mod dataset;
pub mod domain;
pub mod eval;
pub mod pipeline;
pub mod roster;
pub mod service;

pub use caption::{compose, parse, CaptionParts, ValidationReport, ViolationCode};
pub use domain::{
    format_date, Confidence, EntityDetection, ImageAsset, ImageMetadata, ResolutionStatus,
    ResolvedEntity,
};
pub use pipeline::{run_pipeline, Backends, PipelineConfig, PipelineResult};
pub use roster::{entity_phrase, filter_high, load_rosters, Roster, RosterEntry, RosterSet};
