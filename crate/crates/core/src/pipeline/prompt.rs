//! Deterministic prompt templates for both model levels.

use std::fmt::Write;

use crate::domain::{format_date, ImageMetadata, ResolvedEntity};
use crate::pipeline::backend::InferenceRequest;
use crate::pipeline::PipelineConfig;
use crate::roster::{entity_phrase, RosterSet};

pub const ROSTER_UNAVAILABLE: &str = "roster unavailable";
pub const NO_IDENTIFIED_PLAYERS: &str = "no identified players";

const LEVEL1_SYSTEM: &str = "You are a player-identification model for professional football photos. \
Identify players only by team and jersey number. Never write player names.";

const LEVEL1_INSTRUCTIONS: &str = "List every player visible in the image, one per line, exactly as:\n\
Team Name (jersey) [HIGH]\n\
Use [HIGH] for in-focus players and [LOW] for out-of-focus or partially visible players.\n\
If no player is visible, answer with the single word NONE.";

const LEVEL2_SYSTEM: &str = "You are a caption writer for a sports photo wire service. \
Write exactly one caption in the house style.";

const LEVEL2_INSTRUCTIONS: &str = "Caption format: <date>; <location>; <caption entity and action> <credit>\n\
Name each player as: Team position First Last (jersey). Describe the action in present tense. \
Mention only the identified players listed below.";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("strict mode requires at least one roster")]
pub struct EmptyRosterError;

/// Roster context, team by team in canonical order, players by jersey.
/// Lines use `#N Name, position` so they never read as in-caption mentions.
pub fn roster_context(rosters: &RosterSet) -> String {
    if rosters.is_empty() {
        return ROSTER_UNAVAILABLE.to_string();
    }
    let mut out = String::new();
    for team in rosters.teams() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&team.team_name);
        if !team.team_aliases.is_empty() {
            let _ = write!(out, " (aliases: {})", team.team_aliases.join(", "));
        }
        let mut entries: Vec<_> = team.entries.iter().collect();
        entries.sort_by_key(|e| (e.jersey_number.is_none(), e.jersey_number, e.player_name.clone()));
        for e in entries {
            match e.jersey_number {
                Some(n) => {
                    let _ = write!(out, "\n  #{n} {}, {}", e.player_name, e.position);
                }
                None => {
                    let _ = write!(out, "\n  {}: {}", e.position, e.player_name);
                }
            }
        }
    }
    out
}

pub fn metadata_block(meta: &ImageMetadata) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Event: {}", meta.event_title);
    let _ = writeln!(out, "Date: {}", format_date(meta.event_date));
    let _ = writeln!(out, "Location: {}", meta.location);
    if let Some(venue) = &meta.venue {
        let _ = writeln!(out, "Venue: {venue}");
    }
    let _ = write!(out, "Credit: {}", meta.credit);
    out
}

pub fn build_level1_prompt(
    meta: &ImageMetadata,
    rosters: &RosterSet,
    cfg: &PipelineConfig,
) -> Result<InferenceRequest, EmptyRosterError> {
    if cfg.strict_roster && rosters.is_empty() {
        return Err(EmptyRosterError);
    }
    let user_text = format!(
        "{LEVEL1_INSTRUCTIONS}\n\nRosters:\n{}\n\nMetadata:\n{}",
        roster_context(rosters),
        metadata_block(meta)
    );
    Ok(InferenceRequest {
        system_text: LEVEL1_SYSTEM.to_string(),
        user_text,
        image_ref: meta.source_id.clone(),
        image: None,
        max_tokens: cfg.level1_max_tokens,
        temperature: cfg.temperature,
    })
}

/// `resolved` is expected to be filtered already; entities that are not
/// RESOLVED are skipped since they have no phrase.
pub fn build_level2_prompt(
    meta: &ImageMetadata,
    rosters: &RosterSet,
    resolved: &[ResolvedEntity],
    aux_block: &str,
    cfg: &PipelineConfig,
) -> InferenceRequest {
    let phrases: Vec<String> = resolved.iter().filter_map(|e| entity_phrase(e).ok()).collect();
    let players = if phrases.is_empty() {
        NO_IDENTIFIED_PLAYERS.to_string()
    } else {
        phrases.join("\n")
    };
    let aux = if aux_block.is_empty() { "none" } else { aux_block };
    let date = format_date(meta.event_date);
    let user_text = format!(
        "{LEVEL2_INSTRUCTIONS}\n\nMetadata:\n{}\n\nRosters:\n{}\n\nIdentified players:\n{players}\n\n\
Visual context:\n{aux}\n\n\
Begin the caption with exactly: {date}; {}; \n\
End the caption with exactly: {}",
        metadata_block(meta),
        roster_context(rosters),
        meta.location,
        meta.credit,
    );
    InferenceRequest {
        system_text: LEVEL2_SYSTEM.to_string(),
        user_text,
        image_ref: meta.source_id.clone(),
        image: None,
        max_tokens: cfg.level2_max_tokens,
        temperature: cfg.temperature,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Confidence, EntityDetection};
    use crate::roster::{Roster, RosterEntry};
    use chrono::NaiveDate;

    fn meta() -> ImageMetadata {
        ImageMetadata {
            event_date: NaiveDate::from_ymd_opt(2025, 2, 9).unwrap(),
            location: "New Orleans, Louisiana, USA".into(),
            venue: Some("Caesars Superdome".into()),
            event_title: "Championship Game".into(),
            credit: "Mandatory Credit: J. Smith-Wire Photos".into(),
            source_id: "img-001".into(),
        }
    }

    fn rosters() -> RosterSet {
        let d = NaiveDate::from_ymd_opt(2025, 1, 1).unwrap();
        RosterSet::new(vec![
            Roster {
                team_name: "Team B".into(),
                team_aliases: vec![],
                effective_date: d,
                entries: vec![RosterEntry::player(54, "Sam Poe", "linebacker")],
            },
            Roster {
                team_name: "Team A".into(),
                team_aliases: vec!["A Team".into()],
                effective_date: d,
                entries: vec![
                    RosterEntry::player(26, "Ray Moe", "running back"),
                    RosterEntry::player(1, "Pat Doe", "quarterback"),
                ],
            },
        ])
        .unwrap()
    }

    #[test]
    fn level1_is_deterministic_and_ordered() {
        let cfg = PipelineConfig::default();
        let a = build_level1_prompt(&meta(), &rosters(), &cfg).unwrap();
        let b = build_level1_prompt(&meta(), &rosters(), &cfg).unwrap();
        assert_eq!(a, b);
        let ia = a.user_text.find("Team A (aliases").unwrap();
        let ib = a.user_text.find("Team B").unwrap();
        assert!(ia < ib);
        assert!(a.user_text.find("#1 Pat Doe").unwrap() < a.user_text.find("#26 Ray Moe").unwrap());
        assert!(a.user_text.contains("Date: Feb 9, 2025"));
        assert_eq!(a.max_tokens, 128);
        assert_eq!(a.temperature, 0.0);
    }

    #[test]
    fn level1_empty_roster_modes() {
        let strict = PipelineConfig::default();
        assert_eq!(
            build_level1_prompt(&meta(), &RosterSet::empty(), &strict),
            Err(EmptyRosterError)
        );
        let lenient = PipelineConfig {
            strict_roster: false,
            ..PipelineConfig::default()
        };
        let req = build_level1_prompt(&meta(), &RosterSet::empty(), &lenient).unwrap();
        assert!(req.user_text.contains(ROSTER_UNAVAILABLE));
    }

    #[test]
    fn level2_markers_and_phrases() {
        let cfg = PipelineConfig::default();
        let r = rosters();
        let req = build_level2_prompt(&meta(), &r, &[], "", &cfg);
        assert!(req.user_text.contains(NO_IDENTIFIED_PLAYERS));
        assert_eq!(req, build_level2_prompt(&meta(), &r, &[], "", &cfg));
        assert_eq!(req.max_tokens, 256);

        let doe = r.resolve(&EntityDetection::new("Team A", 1, Confidence::High));
        let aux = "LOGO: NFL (score=0.80)";
        let req = build_level2_prompt(&meta(), &r, &[doe], aux, &cfg);
        assert_eq!(req.user_text.matches("Team A quarterback Pat Doe (1)").count(), 1);
        assert!(!req.user_text.contains(NO_IDENTIFIED_PLAYERS));
        assert!(req.user_text.contains(aux));
        assert!(req.user_text.contains("Feb 9, 2025; New Orleans, Louisiana, USA; "));
        assert!(req.user_text.contains("Mandatory Credit: J. Smith-Wire Photos"));
        // Roster lines must not look like mentions.
        assert_eq!(crate::caption::extract_mentions(&req.user_text).len(), 1);
    }
}
