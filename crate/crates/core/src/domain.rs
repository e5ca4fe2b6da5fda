//! Domain types shared by every stage of the captioning pipeline.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Photographer-supplied wire metadata attached to every image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMetadata {
    pub event_date: NaiveDate,
    #[serde(default)]
    pub location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue: Option<String>,
    #[serde(default)]
    pub event_title: String,
    #[serde(default)]
    pub credit: String,
    #[serde(default)]
    pub source_id: String,
}

/// A single field-level problem found while validating metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub problem: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.problem)
    }
}

impl ImageMetadata {
    /// Checks the per-record invariants. Batch-level uniqueness of
    /// `source_id` is checked by the caller.
    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        let mut require = |field: &str, value: &str| {
            if value.trim().is_empty() {
                errors.push(FieldError {
                    field: field.to_string(),
                    problem: "must be non-empty".to_string(),
                });
            }
        };
        require("source_id", &self.source_id);
        require("credit", &self.credit);
        require("location", &self.location);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Raw image bytes keyed by the wire `source_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAsset {
    pub source_id: String,
    pub bytes: Arc<[u8]>,
}

impl ImageAsset {
    pub fn new(source_id: impl Into<String>, bytes: impl Into<Arc<[u8]>>) -> Self {
        Self {
            source_id: source_id.into(),
            bytes: bytes.into(),
        }
    }

    /// Fully decodes the image to confirm it is readable. Truncated or
    /// unrecognised payloads are rejected.
    pub fn check_readable(&self) -> Result<(u32, u32), String> {
        if self.bytes.is_empty() {
            return Err("empty image payload".to_string());
        }
        let img = image::load_from_memory(&self.bytes).map_err(|e| e.to_string())?;
        Ok((img.width(), img.height()))
    }
}

/// Labeler confidence for a detected player. `High > Low`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Confidence {
    Low,
    High,
}

impl Confidence {
    pub fn as_str(self) -> &'static str {
        match self {
            Confidence::High => "HIGH",
            Confidence::Low => "LOW",
        }
    }
}

impl PartialOrd for Confidence {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Confidence {
    fn cmp(&self, other: &Self) -> Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Jersey numbers are restricted to `0..=99`.
pub const MAX_JERSEY: u8 = 99;

/// One Level-1 label: a team reference, a jersey number, and a confidence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityDetection {
    pub team_ref: String,
    pub jersey_number: u8,
    pub confidence: Confidence,
}

impl EntityDetection {
    pub fn new(team_ref: impl Into<String>, jersey_number: u8, confidence: Confidence) -> Self {
        Self {
            team_ref: team_ref.into(),
            jersey_number,
            confidence,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.jersey_number <= MAX_JERSEY && !self.team_ref.trim().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResolutionStatus {
    Resolved,
    UnknownTeam,
    UnknownJersey,
}

/// A detection after roster lookup.
///
/// `player_name` and `position` are present exactly when `status` is
/// [`ResolutionStatus::Resolved`]; `team_name` is canonical unless the team
/// itself was unknown, in which case it echoes the raw reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResolvedEntity {
    pub detection: EntityDetection,
    pub player_name: Option<String>,
    pub position: Option<String>,
    pub team_name: String,
    pub status: ResolutionStatus,
}

impl ResolvedEntity {
    pub fn is_resolved(&self) -> bool {
        self.status == ResolutionStatus::Resolved
    }
}

/// Lowercases and collapses internal whitespace runs into single spaces.
pub fn normalize_key(raw: &str) -> String {
    raw.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders a date as `MonAbbrev D, YYYY`, e.g. `Feb 9, 2025`.
pub fn format_date(d: NaiveDate) -> String {
    d.format("%b %-d, %Y").to_string()
}

/// Inverse of [`format_date`]. Only accepts the exact rendered form.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let d = NaiveDate::parse_from_str(s, "%b %-d, %Y").ok()?;
    (format_date(d) == s).then_some(d)
}
