//! Parser, composer and validator for four-segment wire captions.
//!
//! ```text
//! caption   = date "; " location "; " body " " credit ;
//! date      = text ;                      (* "MonAbbrev D, YYYY" when validated *)
//! location  = text ;
//! body      = sentence { " " sentence } ; (* last character is "." *)
//! credit    = credit-prefix text ;        (* default prefix "Mandatory Credit:" *)
//! mention   = name-token " " name-token { " " name-token } " (" digit [ digit ] ")" ;
//! name-token= uppercase-letter { letter | "." | "'" | "-" } ;
//! text      = ? any characters not containing "; " ? ;
//! ```
//!
//! The split is positional: date and location end at the first two `"; "`
//! separators, and the credit begins at the last occurrence of
//! `" " + credit-prefix`. Mentions are the `Name (N)` cores found inside the
//! body; any team/position prefix in front of the name is ignored.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{format_date, normalize_key, ImageMetadata, ResolvedEntity};

pub const SEGMENT_SEPARATOR: &str = "; ";
pub const DEFAULT_CREDIT_PREFIX: &str = "Mandatory Credit:";

static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(\p{Lu}[\p{L}.'\-]*(?: \p{Lu}[\p{L}.'\-]*)+) \(([0-9]{1,2})\)")
        .expect("mention pattern compiles")
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    BadDate,
    BadLocation,
    BadCredit,
    NoEntity,
    UnknownEntity,
    MalformedSegments,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationCode::BadDate => "BAD_DATE",
            ViolationCode::BadLocation => "BAD_LOCATION",
            ViolationCode::BadCredit => "BAD_CREDIT",
            ViolationCode::NoEntity => "NO_ENTITY",
            ViolationCode::UnknownEntity => "UNKNOWN_ENTITY",
            ViolationCode::MalformedSegments => "MALFORMED_SEGMENTS",
        };
        f.write_str(s)
    }
}

/// Grammar failure raised by [`compose`] or [`parse`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code} ({field}): {detail}")]
pub struct GrammarError {
    pub code: ViolationCode,
    pub field: &'static str,
    pub detail: String,
}

impl GrammarError {
    fn new(code: ViolationCode, field: &'static str, detail: impl Into<String>) -> Self {
        Self {
            code,
            field,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub player_name: String,
    pub jersey_number: u8,
}

impl EntityMention {
    pub fn new(player_name: impl Into<String>, jersey_number: u8) -> Self {
        Self {
            player_name: player_name.into(),
            jersey_number,
        }
    }

    /// The literal `Name (N)` text this mention was extracted from.
    pub fn literal(&self) -> String {
        format!("{} ({})", self.player_name, self.jersey_number)
    }
}

/// Structured decomposition of a stylized caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionParts {
    pub date_text: String,
    pub location_text: String,
    pub body: String,
    pub credit_text: String,
    pub entity_mentions: Vec<EntityMention>,
}

impl CaptionParts {
    /// Builds parts from the four segments, extracting mentions from `body`.
    pub fn from_segments(
        date_text: impl Into<String>,
        location_text: impl Into<String>,
        body: impl Into<String>,
        credit_text: impl Into<String>,
    ) -> Self {
        let body = body.into();
        let entity_mentions = extract_mentions(&body);
        Self {
            date_text: date_text.into(),
            location_text: location_text.into(),
            body,
            credit_text: credit_text.into(),
            entity_mentions,
        }
    }

    fn check(&self) -> Result<(), GrammarError> {
        use ViolationCode::*;
        let fields: [(&'static str, &str, ViolationCode); 4] = [
            ("date_text", &self.date_text, BadDate),
            ("location_text", &self.location_text, BadLocation),
            ("body", &self.body, MalformedSegments),
            ("credit_text", &self.credit_text, BadCredit),
        ];
        for (name, value, code) in fields {
            if value.trim().is_empty() {
                return Err(GrammarError::new(code, name, "segment is empty"));
            }
            if value.contains(SEGMENT_SEPARATOR) {
                return Err(GrammarError::new(
                    MalformedSegments,
                    name,
                    "segment contains the \"; \" separator",
                ));
            }
        }
        if !self.body.ends_with('.') {
            return Err(GrammarError::new(
                MalformedSegments,
                "body",
                "body must end with a period",
            ));
        }
        for m in &self.entity_mentions {
            if !self.body.contains(&m.literal()) {
                return Err(GrammarError::new(
                    UnknownEntity,
                    "entity_mentions",
                    format!("{:?} does not occur in body", m.literal()),
                ));
            }
        }
        Ok(())
    }
}

/// Renders parts as `<date>; <location>; <body> <credit>`.
pub fn compose(parts: &CaptionParts) -> Result<String, GrammarError> {
    parts.check()?;
    Ok(format!(
        "{}{sep}{}{sep}{} {}",
        parts.date_text,
        parts.location_text,
        parts.body,
        parts.credit_text,
        sep = SEGMENT_SEPARATOR
    ))
}

pub fn parse(text: &str) -> Result<CaptionParts, GrammarError> {
    parse_with_prefix(text, DEFAULT_CREDIT_PREFIX)
}

/// Strict parse; no repair is attempted.
pub fn parse_with_prefix(text: &str, credit_prefix: &str) -> Result<CaptionParts, GrammarError> {
    use ViolationCode::*;
    let mut segments = text.splitn(3, SEGMENT_SEPARATOR);
    let (date, location, rest) = match (segments.next(), segments.next(), segments.next()) {
        (Some(d), Some(l), Some(r)) => (d, l, r),
        _ => {
            return Err(GrammarError::new(
                MalformedSegments,
                "caption",
                "expected at least two \"; \" separators",
            ))
        }
    };
    if date.trim().is_empty() {
        return Err(GrammarError::new(BadDate, "date_text", "date segment is empty"));
    }
    if location.trim().is_empty() {
        return Err(GrammarError::new(
            BadLocation,
            "location_text",
            "location segment is empty",
        ));
    }
    let marker = format!(" {credit_prefix}");
    let (body, credit) = match rest.rfind(&marker) {
        Some(idx) => (&rest[..idx], &rest[idx + 1..]),
        None if rest.starts_with(credit_prefix) => ("", rest),
        None => {
            return Err(GrammarError::new(
                BadCredit,
                "credit_text",
                format!("missing credit prefix {credit_prefix:?}"),
            ))
        }
    };
    if body.trim().is_empty() {
        return Err(GrammarError::new(MalformedSegments, "body", "body is empty"));
    }
    if !body.ends_with('.') {
        return Err(GrammarError::new(
            MalformedSegments,
            "body",
            "body must end with a period",
        ));
    }
    Ok(CaptionParts::from_segments(date, location, body, credit))
}

/// All `Name (N)` mentions in order of appearance.
pub fn extract_mentions(body: &str) -> Vec<EntityMention> {
    MENTION_RE
        .captures_iter(body)
        .filter_map(|c| {
            let jersey = c[2].parse().ok()?;
            Some(EntityMention::new(&c[1], jersey))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

/// Findings of [`validate`]. `ok` holds exactly when `violations` is empty;
/// `warnings` (currently only `NO_ENTITY`) do not affect `ok`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    #[serde(default)]
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    fn from_findings(violations: Vec<Violation>, warnings: Vec<Violation>) -> Self {
        Self {
            ok: violations.is_empty(),
            violations,
            warnings,
        }
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations
            .iter()
            .chain(&self.warnings)
            .any(|v| v.code == code)
    }
}

pub fn validate(
    text: &str,
    metadata: &ImageMetadata,
    allowed_entities: &[ResolvedEntity],
) -> ValidationReport {
    validate_with_prefix(text, metadata, allowed_entities, DEFAULT_CREDIT_PREFIX)
}

pub fn validate_with_prefix(
    text: &str,
    metadata: &ImageMetadata,
    allowed_entities: &[ResolvedEntity],
    credit_prefix: &str,
) -> ValidationReport {
    match parse_with_prefix(text, credit_prefix) {
        Ok(parts) => validate_parts(&parts, metadata, allowed_entities),
        Err(e) => ValidationReport::from_findings(
            vec![Violation {
                code: e.code,
                detail: e.detail,
            }],
            Vec::new(),
        ),
    }
}

/// Validation over already-parsed parts.
pub fn validate_parts(
    parts: &CaptionParts,
    metadata: &ImageMetadata,
    allowed_entities: &[ResolvedEntity],
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let expected_date = format_date(metadata.event_date);
    if parts.date_text != expected_date {
        violations.push(Violation {
            code: ViolationCode::BadDate,
            detail: format!("expected {expected_date:?}, found {:?}", parts.date_text),
        });
    }
    if parts.location_text.trim().is_empty() {
        violations.push(Violation {
            code: ViolationCode::BadLocation,
            detail: "location segment is empty".into(),
        });
    }
    if parts.credit_text != metadata.credit {
        violations.push(Violation {
            code: ViolationCode::BadCredit,
            detail: format!(
                "expected {:?}, found {:?}",
                metadata.credit, parts.credit_text
            ),
        });
    }
    for m in &parts.entity_mentions {
        let allowed = allowed_entities.iter().any(|e| {
            e.detection.jersey_number == m.jersey_number
                && e.player_name
                    .as_deref()
                    .is_some_and(|n| normalize_key(n) == normalize_key(&m.player_name))
        });
        if !allowed {
            violations.push(Violation {
                code: ViolationCode::UnknownEntity,
                detail: format!("{} is not an allowed entity", m.literal()),
            });
        }
    }
    if parts.body.trim().is_empty() {
        violations.push(Violation {
            code: ViolationCode::MalformedSegments,
            detail: "body is empty".into(),
        });
    }
    if !allowed_entities.is_empty() && parts.entity_mentions.is_empty() {
        warnings.push(Violation {
            code: ViolationCode::NoEntity,
            detail: format!(
                "{} allowed entities but the body mentions none",
                allowed_entities.len()
            ),
        });
    }
    ValidationReport::from_findings(violations, warnings)
}
