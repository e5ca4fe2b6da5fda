//! Map Level-1 labels to roster names.
//!
//! Run with `cargo run --example roster_resolution`.

use capwire::domain::{Confidence, EntityDetection};
use capwire::{entity_phrase, filter_high, Roster, RosterEntry, RosterSet};
use chrono::NaiveDate;

pub fn rosters() -> RosterSet {
    let hawks = Roster {
        team_name: "Riverton Hawks".into(),
        team_aliases: vec!["Hawks".into(), "RIV".into()],
        effective_date: NaiveDate::from_ymd_opt(2025, 9, 1).unwrap(),
        entries: vec![
            RosterEntry::player(7, "Marcus Doyle", "quarterback"),
            RosterEntry::player(22, "Andre Whitfield", "running back"),
        ],
    };
    RosterSet::new(vec![hawks]).expect("valid roster")
}

pub fn run_example() -> Result<Vec<String>, Box<dyn std::error::Error>> {
    let rosters = rosters();
    let detections = vec![
        EntityDetection::new("hawks", 22, Confidence::High),
        EntityDetection::new("RIV", 7, Confidence::Low),
        EntityDetection::new("Riverton Hawks", 99, Confidence::High),
        EntityDetection::new("Visitors", 5, Confidence::High),
    ];

    for d in &detections {
        let r = rosters.resolve(d);
        println!("{:<16} #{:<2} -> {:?} {:?}", d.team_ref, d.jersey_number, r.status, r.player_name);
    }

    // Only HIGH labels that resolve make it into the Level-2 prompt.
    let mut phrases = Vec::new();
    for d in filter_high(&detections) {
        if let Ok(p) = entity_phrase(&rosters.resolve(&d)) {
            phrases.push(p);
        }
    }
    println!("allowed: {phrases:?}");
    Ok(phrases)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
