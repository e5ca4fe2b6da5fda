//! SFT record construction for both model levels.
//!
//! Level-1 targets are the annotated `(team, jersey, confidence)` labels in
//! the line grammar. Level-2 targets are ground-truth captions that mention
//! only players labeled HIGH in the Level-1 annotation; captions that
//! mention anyone else are skipped ([`Level2Policy::Strict`]) or have the
//! offending entity phrase removed ([`Level2Policy::Scrub`]).

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{merge_annotations, AuxAnnotation};
use crate::caption::{self, CaptionParts, EntityMention};
use crate::domain::{Confidence, EntityDetection, ImageMetadata};
use crate::pipeline::{
    allowed_entities, build_level1_prompt, build_level2_prompt, format_level1_lines,
    parse_level1_response, PipelineConfig,
};
use crate::roster::{RosterSet, TeamMatch};

pub const BUILDER_VERSION: &str = concat!("capwire-", env!("CARGO_PKG_VERSION"));

/// One labeled training image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub image_ref: String,
    pub metadata: ImageMetadata,
    #[serde(default)]
    pub gt_detections: Vec<EntityDetection>,
    pub gt_caption: String,
    #[serde(default)]
    pub aux: Vec<AuxAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SftLevel {
    Level1,
    Level2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub builder_version: String,
}

/// One training example. Field order is the on-disk field order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub level: SftLevel,
    pub system_text: String,
    pub user_text: String,
    pub image_ref: String,
    pub target: String,
    pub provenance: Provenance,
}

impl SftRecord {
    /// Re-checks the record invariants, returning a description of the
    /// first problem found.
    pub fn check(&self, credit_prefix: &str) -> Result<(), String> {
        if self.target.trim().is_empty() {
            return Err("target is empty".into());
        }
        if self.system_text.trim().is_empty() || self.user_text.trim().is_empty() {
            return Err("prompt text is empty".into());
        }
        match self.level {
            SftLevel::Level1 => parse_level1_response(&self.target)
                .map(|_| ())
                .map_err(|e| format!("LEVEL1 target: {e}")),
            SftLevel::Level2 => caption::parse_with_prefix(&self.target, credit_prefix)
                .map(|_| ())
                .map_err(|e| format!("LEVEL2 target: {e}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level2Policy {
    #[default]
    Strict,
    Scrub,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("{source_id}: detection references team {team:?} which is not on any roster")]
    UnknownTeam { source_id: String, team: String },
    #[error("{source_id}: ground-truth caption does not parse: {detail}")]
    UnparseableCaption { source_id: String, detail: String },
    #[error("{source_id}: player name {name:?} matches {count} roster entries")]
    AmbiguousName {
        source_id: String,
        name: String,
        count: usize,
    },
    #[error("{source_id}: {detail}")]
    Prompt { source_id: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Level2Outcome {
    Record(SftRecord),
    Skipped { source_id: String, reason: String },
}

fn provenance(a: &AnnotatedImage) -> Provenance {
    Provenance {
        source_id: a.metadata.source_id.clone(),
        builder_version: BUILDER_VERSION.to_string(),
    }
}

/// Canonicalizes teams, merges duplicate labels (max confidence) and sorts
/// by `(team, jersey)`.
fn canonical_detections(
    a: &AnnotatedImage,
    rosters: &RosterSet,
) -> Result<Vec<EntityDetection>, DatasetError> {
    let mut merged: BTreeMap<(String, u8), Confidence> = BTreeMap::new();
    for d in &a.gt_detections {
        let team = match rosters.normalize_team_name(&d.team_ref) {
            TeamMatch::Known(t) => t.to_string(),
            TeamMatch::UnknownTeam => {
                return Err(DatasetError::UnknownTeam {
                    source_id: a.metadata.source_id.clone(),
                    team: d.team_ref.clone(),
                })
            }
        };
        let c = merged.entry((team, d.jersey_number)).or_insert(d.confidence);
        *c = (*c).max(d.confidence);
    }
    Ok(merged
        .into_iter()
        .map(|((team, jersey), conf)| EntityDetection::new(team, jersey, conf))
        .collect())
}

pub fn build_level1_record(
    a: &AnnotatedImage,
    rosters: &RosterSet,
    cfg: &PipelineConfig,
) -> Result<SftRecord, DatasetError> {
    let detections = canonical_detections(a, rosters)?;
    let mut prompt = build_level1_prompt(&a.metadata, rosters, cfg).map_err(|e| {
        DatasetError::Prompt {
            source_id: a.metadata.source_id.clone(),
            detail: e.to_string(),
        }
    })?;
    prompt.image_ref = a.image_ref.clone();
    Ok(SftRecord {
        level: SftLevel::Level1,
        system_text: prompt.system_text,
        user_text: prompt.user_text,
        image_ref: prompt.image_ref,
        target: format_level1_lines(&detections),
        provenance: provenance(a),
    })
}

/// Why a caption mention fails the HIGH-confidence rule, or `None` if it passes.
fn disqualification(
    m: &EntityMention,
    high: &[EntityDetection],
    rosters: &RosterSet,
    source_id: &str,
) -> Result<Option<String>, DatasetError> {
    let hits = rosters.players_named(&m.player_name);
    let (team, entry) = match hits.as_slice() {
        [] => return Ok(Some(format!("{} is not on any roster", m.literal()))),
        [one] => *one,
        many => {
            return Err(DatasetError::AmbiguousName {
                source_id: source_id.to_string(),
                name: m.player_name.clone(),
                count: many.len(),
            })
        }
    };
    if entry.jersey_number != Some(m.jersey_number) {
        return Ok(Some(format!(
            "{} does not match the roster jersey of {}",
            m.literal(),
            entry.player_name
        )));
    }
    let labeled_high = high
        .iter()
        .any(|d| d.team_ref == team.team_name && d.jersey_number == m.jersey_number);
    if labeled_high {
        Ok(None)
    } else {
        Ok(Some(format!("{} is not a HIGH-confidence player", m.literal())))
    }
}

const CLAUSE_CONNECTORS: &[&str] = &["as", "while", "with", "after", "before", "when"];

/// Removes one mention (with any `team position` prefix in front of it)
/// from `body` and tidies the surrounding punctuation.
fn scrub_mention(body: &str, m: &EntityMention, rosters: &RosterSet) -> Option<String> {
    let literal = m.literal();
    let at = body.find(&literal)?;
    let mut start = at;
    if let [(team, entry)] = rosters.players_named(&m.player_name).as_slice() {
        let with_team = format!("{} {} ", team.team_name, entry.position);
        let position_only = format!("{} ", entry.position);
        if body[..at].ends_with(&with_team) {
            start = at - with_team.len();
        } else if body[..at].ends_with(&position_only) {
            start = at - position_only.len();
        }
    }
    // `, as <mention> runs a route.` -> drop the whole subordinate clause.
    if let Some(comma) = body[..start].rfind(", ") {
        let lead = body[comma + 2..start].trim();
        if CLAUSE_CONNECTORS.contains(&lead) {
            let rest = &body[at + literal.len()..];
            let end = rest.find([',', '.']).map_or(body.len(), |i| at + literal.len() + i);
            return Some(tidy_sentence(&format!("{}{}", &body[..comma], &body[end..])));
        }
    }
    let mut before = body[..start].to_string();
    let mut after = body[at + literal.len()..].to_string();
    if let Some(b) = before.strip_suffix(" and ") {
        before = format!("{b} ");
    } else if let Some(b) = before.strip_suffix(", ") {
        before = format!("{b} ");
    } else if let Some(a) = after.strip_prefix(" and ") {
        after = format!(" {a}");
    } else if let Some(a) = after.strip_prefix(", ") {
        after = format!(" {a}");
    }
    Some(tidy_sentence(&format!("{before}{after}")))
}

fn tidy_sentence(s: &str) -> String {
    let mut out = s.split_whitespace().collect::<Vec<_>>().join(" ");
    for (from, to) in [(" .", "."), (" ,", ","), (",.", "."), ("..", ".")] {
        while out.contains(from) {
            out = out.replace(from, to);
        }
    }
    let out = out.trim_start_matches([',', '.', ' ']).to_string();
    let mut chars = out.chars();
    let mut out: String = match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    };
    if !out.is_empty() && !out.ends_with('.') {
        out.push('.');
    }
    out
}

pub fn build_level2_record(
    a: &AnnotatedImage,
    rosters: &RosterSet,
    policy: Level2Policy,
    cfg: &PipelineConfig,
) -> Result<Level2Outcome, DatasetError> {
    let source_id = &a.metadata.source_id;
    let parts = caption::parse_with_prefix(&a.gt_caption, &cfg.credit_prefix).map_err(|e| {
        DatasetError::UnparseableCaption {
            source_id: source_id.clone(),
            detail: e.to_string(),
        }
    })?;
    let high: Vec<EntityDetection> = a
        .gt_detections
        .iter()
        .filter(|d| d.confidence == Confidence::High)
        .filter_map(|d| match rosters.normalize_team_name(&d.team_ref) {
            TeamMatch::Known(t) => Some(EntityDetection::new(t, d.jersey_number, d.confidence)),
            TeamMatch::UnknownTeam => None,
        })
        .collect();

    let mut offending = Vec::new();
    for m in &parts.entity_mentions {
        if let Some(reason) = disqualification(m, &high, rosters, source_id)? {
            offending.push((m.clone(), reason));
        }
    }

    let target = if offending.is_empty() {
        a.gt_caption.clone()
    } else {
        match policy {
            Level2Policy::Strict => {
                return Ok(Level2Outcome::Skipped {
                    source_id: source_id.clone(),
                    reason: offending
                        .iter()
                        .map(|(_, r)| r.as_str())
                        .collect::<Vec<_>>()
                        .join("; "),
                })
            }
            Level2Policy::Scrub => match scrub_caption(&parts, &offending, &high, rosters, cfg, source_id)? {
                Ok(text) => text,
                Err(reason) => {
                    return Ok(Level2Outcome::Skipped {
                        source_id: source_id.clone(),
                        reason,
                    })
                }
            },
        }
    };

    let resolved: Vec<_> = high.iter().map(|d| rosters.resolve(d)).collect();
    let allowed = allowed_entities(&resolved);
    let aux = merge_annotations(std::slice::from_ref(&a.aux));
    let prompt = build_level2_prompt(&a.metadata, rosters, &allowed, &aux, cfg);
    Ok(Level2Outcome::Record(SftRecord {
        level: SftLevel::Level2,
        system_text: prompt.system_text,
        user_text: prompt.user_text,
        image_ref: a.image_ref.clone(),
        target,
        provenance: provenance(a),
    }))
}

// Outer error: fatal build error. Inner error: skip reason.
fn scrub_caption(
    parts: &CaptionParts,
    offending: &[(EntityMention, String)],
    high: &[EntityDetection],
    rosters: &RosterSet,
    cfg: &PipelineConfig,
    source_id: &str,
) -> Result<Result<String, String>, DatasetError> {
    let mut body = parts.body.clone();
    for (m, _) in offending {
        match scrub_mention(&body, m, rosters) {
            Some(b) => body = b,
            None => return Ok(Err(format!("could not locate {} in body", m.literal()))),
        }
    }
    if !body.chars().any(char::is_alphabetic) {
        return Ok(Err("nothing left after removing disallowed players".into()));
    }
    let scrubbed = CaptionParts::from_segments(
        parts.date_text.clone(),
        parts.location_text.clone(),
        body,
        parts.credit_text.clone(),
    );
    let text = match caption::compose(&scrubbed) {
        Ok(t) => t,
        Err(e) => return Ok(Err(format!("scrubbed caption is malformed: {e}"))),
    };
    let reparsed = match caption::parse_with_prefix(&text, &cfg.credit_prefix) {
        Ok(p) => p,
        Err(e) => return Ok(Err(format!("scrubbed caption does not parse: {e}"))),
    };
    for m in &reparsed.entity_mentions {
        if let Some(reason) = disqualification(m, high, rosters, source_id)? {
            return Ok(Err(format!("scrubbed caption still fails: {reason}")));
        }
    }
    Ok(Ok(text))
}

/// Records plus everything that did not make it in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildOutcome {
    pub records: Vec<SftRecord>,
    pub skipped: Vec<(String, String)>,
    pub errors: Vec<(String, String)>,
}

/// Builds LEVEL1 and LEVEL2 records for every image, in input order.
pub fn build_dataset(
    images: &[AnnotatedImage],
    rosters: &RosterSet,
    policy: Level2Policy,
    cfg: &PipelineConfig,
) -> BuildOutcome {
    let mut out = BuildOutcome::default();
    for a in images {
        let id = a.metadata.source_id.clone();
        match build_level1_record(a, rosters, cfg) {
            Ok(r) => out.records.push(r),
            Err(e) => out.errors.push((id.clone(), e.to_string())),
        }
        match build_level2_record(a, rosters, policy, cfg) {
            Ok(Level2Outcome::Record(r)) => out.records.push(r),
            Ok(Level2Outcome::Skipped { source_id, reason }) => out.skipped.push((source_id, reason)),
            Err(e) => out.errors.push((id, e.to_string())),
        }
    }
    out
}

/// Reads annotated images from a JSON array or from JSON Lines.
pub fn read_annotations(path: &Path) -> io::Result<Vec<AnnotatedImage>> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(io::Error::other);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| io::Error::other(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

/// One JSON object per line, fixed field order, trailing newline.
pub fn export_dataset(records: &[SftRecord], path: &Path) -> io::Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(io::Error::other)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    f.sync_all()
}

pub fn read_dataset(path: &Path) -> io::Result<Vec<SftRecord>> {
    fs::read_to_string(path)?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(io::Error::other))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineViolation {
    pub line: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub records: usize,
    pub per_level: BTreeMap<SftLevel, usize>,
    /// Label counts across LEVEL1 targets.
    pub confidence: BTreeMap<String, usize>,
    pub violations: Vec<LineViolation>,
}

impl DatasetReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-checks every record in an exported file. Bad lines are reported
/// with their 1-based line number; they never abort the scan.
pub fn validate_dataset(path: &Path, credit_prefix: &str) -> io::Result<DatasetReport> {
    let bytes = fs::read(path)?;
    let mut report = DatasetReport::default();
    if bytes.is_empty() {
        return Ok(report);
    }
    let terminated = bytes.ends_with(b"\n");
    let body = if terminated { &bytes[..bytes.len() - 1] } else { &bytes[..] };
    let total = body.split(|&b| b == b'\n').count();
    for (i, raw) in body.split(|&b| b == b'\n').enumerate() {
        let line = i + 1;
        let mut violation = |detail: String| report.violations.push(LineViolation { line, detail });
        let Ok(text) = std::str::from_utf8(raw) else {
            violation("line is not valid UTF-8".into());
            continue;
        };
        if !terminated && line == total {
            violation("final line is missing its newline (truncated file?)".into());
        }
        let record: SftRecord = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => {
                violation(format!("not a record: {e}"));
                continue;
            }
        };
        if let Err(detail) = record.check(credit_prefix) {
            violation(detail);
            continue;
        }
        report.records += 1;
        *report.per_level.entry(record.level).or_default() += 1;
        if record.level == SftLevel::Level1 {
            for d in parse_level1_response(&record.target).unwrap_or_default() {
                *report
                    .confidence
                    .entry(d.confidence.as_str().to_string())
                    .or_default() += 1;
            }
        }
    }
    Ok(report)
}
