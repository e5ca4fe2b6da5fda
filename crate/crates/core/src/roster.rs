//! Team rosters and the deterministic `(team, jersey) -> player` mapping.
//!
//! A [`RosterSet`] is an immutable snapshot. Team references coming back
//! from the Level-1 model are matched exactly (after case folding and
//! whitespace collapsing) against canonical names and an explicit alias
//! table; there is no fuzzy matching.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    normalize_key, Confidence, EntityDetection, ResolutionStatus, ResolvedEntity, MAX_JERSEY,
};

/// Positions a roster entry may carry.
pub const POSITIONS: &[&str] = &[
    "quarterback",
    "running back",
    "fullback",
    "wide receiver",
    "tight end",
    "offensive tackle",
    "offensive guard",
    "center",
    "offensive lineman",
    "defensive end",
    "defensive tackle",
    "nose tackle",
    "defensive lineman",
    "linebacker",
    "cornerback",
    "safety",
    "defensive back",
    "kicker",
    "punter",
    "long snapper",
    "head coach",
    "offensive coordinator",
    "defensive coordinator",
    "owner",
];

/// Roles that never wear a jersey.
pub const NON_PLAYER_POSITIONS: &[&str] = &[
    "head coach",
    "offensive coordinator",
    "defensive coordinator",
    "owner",
];

pub fn is_non_player(position: &str) -> bool {
    NON_PLAYER_POSITIONS.contains(&position)
}

#[derive(Debug, Error)]
pub enum RosterError {
    #[error("failed to read roster file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse roster file {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("team {team:?} lists jersey {number} more than once")]
    DuplicateJersey { team: String, number: u8 },
    #[error("team {team:?} is defined more than once")]
    DuplicateTeam { team: String },
    #[error("alias {alias:?} is claimed by both {first:?} and {second:?}")]
    AliasCollision {
        alias: String,
        first: String,
        second: String,
    },
    #[error("team {team:?}: {detail}")]
    InvalidEntry { team: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    #[serde(rename = "jersey", default, skip_serializing_if = "Option::is_none")]
    pub jersey_number: Option<u8>,
    #[serde(rename = "name")]
    pub player_name: String,
    pub position: String,
}

impl RosterEntry {
    pub fn player(jersey: u8, name: impl Into<String>, position: impl Into<String>) -> Self {
        Self {
            jersey_number: Some(jersey),
            player_name: name.into(),
            position: position.into(),
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.player_name.split_whitespace().count() < 2 {
            return Err(format!(
                "player name {:?} needs at least two name tokens",
                self.player_name
            ));
        }
        if !POSITIONS.contains(&self.position.as_str()) {
            return Err(format!("unknown position {:?}", self.position));
        }
        match self.jersey_number {
            Some(n) if n > MAX_JERSEY => Err(format!("jersey {n} out of range")),
            None if !is_non_player(&self.position) => Err(format!(
                "{} ({}) has no jersey number",
                self.player_name, self.position
            )),
            _ => Ok(()),
        }
    }
}

/// One team's roster document, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    pub team_name: String,
    #[serde(rename = "aliases", default)]
    pub team_aliases: Vec<String>,
    pub effective_date: NaiveDate,
    pub entries: Vec<RosterEntry>,
}

impl Roster {
    pub fn entry_for_jersey(&self, jersey: u8) -> Option<&RosterEntry> {
        self.entries.iter().find(|e| e.jersey_number == Some(jersey))
    }

    fn check(&self) -> Result<(), RosterError> {
        if self.team_name.trim().is_empty() {
            return Err(RosterError::InvalidEntry {
                team: self.team_name.clone(),
                detail: "empty team name".into(),
            });
        }
        let mut seen = BTreeMap::new();
        for entry in &self.entries {
            entry.check().map_err(|detail| RosterError::InvalidEntry {
                team: self.team_name.clone(),
                detail,
            })?;
            if let Some(n) = entry.jersey_number {
                if seen.insert(n, ()).is_some() {
                    return Err(RosterError::DuplicateJersey {
                        team: self.team_name.clone(),
                        number: n,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Result of team-name normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeamMatch<'a> {
    Known(&'a str),
    UnknownTeam,
}

/// Immutable, validated collection of team rosters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RosterSet {
    // Sorted by canonical team name.
    teams: Vec<Roster>,
    // Normalized name or alias -> index into `teams`.
    lookup: HashMap<String, usize>,
}

impl RosterSet {
    pub fn new(mut teams: Vec<Roster>) -> Result<Self, RosterError> {
        for team in &teams {
            team.check()?;
        }
        teams.sort_by(|a, b| a.team_name.cmp(&b.team_name));
        let mut lookup: HashMap<String, usize> = HashMap::new();
        for (idx, team) in teams.iter().enumerate() {
            let canonical = normalize_key(&team.team_name);
            match lookup.get(&canonical) {
                Some(&other) if teams[other].team_name == team.team_name => {
                    return Err(RosterError::DuplicateTeam {
                        team: team.team_name.clone(),
                    })
                }
                Some(&other) => {
                    return Err(RosterError::AliasCollision {
                        alias: team.team_name.clone(),
                        first: teams[other].team_name.clone(),
                        second: team.team_name.clone(),
                    })
                }
                None => {
                    lookup.insert(canonical, idx);
                }
            }
        }
        for (idx, team) in teams.iter().enumerate() {
            for alias in &team.team_aliases {
                let key = normalize_key(alias);
                if key.is_empty() {
                    continue;
                }
                match lookup.get(&key) {
                    Some(&other) if other != idx => {
                        return Err(RosterError::AliasCollision {
                            alias: alias.clone(),
                            first: teams[other].team_name.clone(),
                            second: team.team_name.clone(),
                        })
                    }
                    Some(_) => {}
                    None => {
                        lookup.insert(key, idx);
                    }
                }
            }
        }
        Ok(Self { teams, lookup })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.teams.is_empty()
    }

    pub fn len(&self) -> usize {
        self.teams.len()
    }

    /// Teams in canonical (alphabetical) order.
    pub fn teams(&self) -> &[Roster] {
        &self.teams
    }

    pub fn team(&self, canonical: &str) -> Option<&Roster> {
        self.teams.iter().find(|t| t.team_name == canonical)
    }

    pub fn normalize_team_name(&self, raw: &str) -> TeamMatch<'_> {
        match self.lookup.get(&normalize_key(raw)) {
            Some(&idx) => TeamMatch::Known(&self.teams[idx].team_name),
            None => TeamMatch::UnknownTeam,
        }
    }

    /// All `(team, entry)` pairs whose player name matches `name` exactly
    /// after whitespace/case normalization.
    pub fn players_named(&self, name: &str) -> Vec<(&Roster, &RosterEntry)> {
        let key = normalize_key(name);
        self.teams
            .iter()
            .flat_map(|t| t.entries.iter().map(move |e| (t, e)))
            .filter(|(_, e)| normalize_key(&e.player_name) == key)
            .collect()
    }

    /// Maps a Level-1 detection onto the roster. Confidence passes through.
    pub fn resolve(&self, d: &EntityDetection) -> ResolvedEntity {
        let team = match self.lookup.get(&normalize_key(&d.team_ref)) {
            Some(&idx) => &self.teams[idx],
            None => {
                return ResolvedEntity {
                    detection: d.clone(),
                    player_name: None,
                    position: None,
                    team_name: d.team_ref.clone(),
                    status: ResolutionStatus::UnknownTeam,
                }
            }
        };
        match team.entry_for_jersey(d.jersey_number) {
            Some(entry) => ResolvedEntity {
                detection: d.clone(),
                player_name: Some(entry.player_name.clone()),
                position: Some(entry.position.clone()),
                team_name: team.team_name.clone(),
                status: ResolutionStatus::Resolved,
            },
            None => ResolvedEntity {
                detection: d.clone(),
                player_name: None,
                position: None,
                team_name: team.team_name.clone(),
                status: ResolutionStatus::UnknownJersey,
            },
        }
    }
}

/// Reads every team document in `path`: either a single JSON object or
/// one JSON object per line.
pub fn read_roster_file(path: &Path) -> Result<Vec<Roster>, RosterError> {
    let text = fs::read_to_string(path).map_err(|source| RosterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if let Ok(one) = serde_json::from_str::<Roster>(&text) {
        return Ok(vec![one]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<Roster>(line).map_err(|e| RosterError::Parse {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

pub fn load_rosters<P: AsRef<Path>>(paths: &[P]) -> Result<RosterSet, RosterError> {
    let mut teams = Vec::new();
    for p in paths {
        teams.extend(read_roster_file(p.as_ref())?);
    }
    RosterSet::new(teams)
}

/// Serializes one roster as a single-line JSON document.
pub fn roster_to_json(roster: &Roster) -> String {
    serde_json::to_string(roster).expect("roster serialization is infallible")
}

pub fn normalize_team_name<'a>(raw: &str, rosters: &'a RosterSet) -> TeamMatch<'a> {
    rosters.normalize_team_name(raw)
}

pub fn resolve(d: &EntityDetection, rosters: &RosterSet) -> ResolvedEntity {
    rosters.resolve(d)
}

/// Order-preserving subsequence of the HIGH-confidence detections.
pub fn filter_high(ds: &[EntityDetection]) -> Vec<EntityDetection> {
    ds.iter()
        .filter(|d| d.confidence == Confidence::High)
        .cloned()
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("entity phrase requires a resolved entity, got {status:?}")]
pub struct NotResolved {
    pub status: ResolutionStatus,
}

/// `<team> <position> <name> (<jersey>)`, the canonical in-caption phrase.
pub fn entity_phrase(e: &ResolvedEntity) -> Result<String, NotResolved> {
    match (&e.status, &e.player_name, &e.position) {
        (ResolutionStatus::Resolved, Some(name), Some(position)) => Ok(format!(
            "{} {} {} ({})",
            e.team_name, position, name, e.detection.jersey_number
        )),
        _ => Err(NotResolved { status: e.status }),
    }
}
