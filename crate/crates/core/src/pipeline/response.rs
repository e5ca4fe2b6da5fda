//! Parsing model output for both levels.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption::{self, CaptionParts, ViolationCode};
use crate::domain::{format_date, normalize_key, Confidence, EntityDetection, ImageMetadata};

pub const NONE_SENTINEL: &str = "NONE";

// `<team> (<N>) [HIGH|LOW]`; the team may not contain brackets, parens or
// control characters.
static LEVEL1_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^[ \t]*([^\s()\[\]\p{Cc}](?:[^()\[\]\p{Cc}]*[^\s()\[\]\p{Cc}])?)[ \t]*\(([0-9]{1,2})\)[ \t]*\[((?i:high|low))\][ \t]*$",
    )
    .expect("level-1 line pattern compiles")
});

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("line {index} does not match `Team (N) [HIGH|LOW]`: {line:?}")]
pub struct Level1ParseError {
    /// Zero-based line index within the response.
    pub index: usize,
    pub line: String,
}

/// Parses one non-blank line; `None` when it does not conform.
pub fn parse_level1_line(line: &str) -> Option<EntityDetection> {
    let caps = LEVEL1_LINE.captures(line)?;
    let jersey: u8 = caps[2].parse().ok()?;
    let confidence = if caps[3].eq_ignore_ascii_case("high") {
        Confidence::High
    } else {
        Confidence::Low
    };
    Some(EntityDetection::new(caps[1].trim(), jersey, confidence))
}

/// Parses a Level-1 response. `NONE` yields no detections; repeated
/// `(team, jersey)` pairs collapse into the first occurrence carrying the
/// highest confidence seen.
pub fn parse_level1_response(text: &str) -> Result<Vec<EntityDetection>, Level1ParseError> {
    let lines: Vec<(usize, &str)> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    if let [(_, only)] = lines.as_slice() {
        if only.trim() == NONE_SENTINEL {
            return Ok(Vec::new());
        }
    }
    let mut out: Vec<EntityDetection> = Vec::new();
    for (index, line) in lines {
        let d = parse_level1_line(line).ok_or_else(|| Level1ParseError {
            index,
            line: line.to_string(),
        })?;
        let key = normalize_key(&d.team_ref);
        match out
            .iter_mut()
            .find(|e| e.jersey_number == d.jersey_number && normalize_key(&e.team_ref) == key)
        {
            Some(existing) => existing.confidence = existing.confidence.max(d.confidence),
            None => out.push(d),
        }
    }
    Ok(out)
}

/// Serializes detections in the Level-1 line grammar (or `NONE`).
pub fn format_level1_lines(ds: &[EntityDetection]) -> String {
    if ds.is_empty() {
        return NONE_SENTINEL.to_string();
    }
    ds.iter()
        .map(|d| format!("{} ({}) [{}]", d.team_ref, d.jersey_number, d.confidence))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("unparseable caption ({reason}): {raw:?}")]
pub struct UnparseableCaption {
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level2Parse {
    pub parts: CaptionParts,
    pub repaired: bool,
}

/// Strict caption parse, falling back to one repair when the segments are
/// malformed: the whole text becomes the body (period appended if
/// missing) and is wrapped with the metadata date, location and credit.
pub fn parse_level2_response(
    text: &str,
    meta: &ImageMetadata,
    credit_prefix: &str,
) -> Result<Level2Parse, UnparseableCaption> {
    let trimmed = text.trim();
    let fail = |reason: String| UnparseableCaption {
        raw: text.to_string(),
        reason,
    };
    let err = match caption::parse_with_prefix(trimmed, credit_prefix) {
        Ok(parts) => {
            return Ok(Level2Parse {
                parts,
                repaired: false,
            })
        }
        Err(e) => e,
    };
    if err.code != ViolationCode::MalformedSegments {
        return Err(fail(err.to_string()));
    }
    if trimmed.is_empty() {
        return Err(fail("empty response".into()));
    }
    let mut body = trimmed.to_string();
    if !body.ends_with('.') {
        body.push('.');
    }
    let wrapped = CaptionParts::from_segments(
        format_date(meta.event_date),
        meta.location.clone(),
        body,
        meta.credit.clone(),
    );
    let text = caption::compose(&wrapped).map_err(|e| fail(format!("repair failed: {e}")))?;
    let parts = caption::parse_with_prefix(&text, credit_prefix)
        .map_err(|e| fail(format!("repair failed: {e}")))?;
    Ok(Level2Parse {
        parts,
        repaired: true,
    })
}
