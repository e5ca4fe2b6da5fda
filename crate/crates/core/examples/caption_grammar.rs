//! Compose, parse and validate a four-segment wire caption.
//!
//! Run with `cargo run --example caption_grammar`.

use capwire::caption::{extract_mentions, validate};
use capwire::domain::{Confidence, EntityDetection, ImageMetadata, ResolutionStatus, ResolvedEntity};
use capwire::{compose, format_date, parse, CaptionParts};
use chrono::NaiveDate;

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let date = NaiveDate::from_ymd_opt(2025, 9, 7).unwrap();
    let parts = CaptionParts::from_segments(
        format_date(date),
        "Riverton, Ohio, USA",
        "Riverton Hawks quarterback Marcus Doyle (7) throws a pass during the game.",
        "Mandatory Credit: Pat Lee-Wire Photos",
    );
    let text = compose(&parts)?;
    println!("{text}");

    // Parsing recovers the same parts, including the `Name (N)` mentions.
    let back = parse(&text)?;
    assert_eq!(back, parts);
    println!("mentions: {:?}", extract_mentions(&back.body));

    let meta = ImageMetadata {
        event_date: date,
        location: "Riverton, Ohio, USA".into(),
        venue: None,
        event_title: "Bears at Hawks".into(),
        credit: "Mandatory Credit: Pat Lee-Wire Photos".into(),
        source_id: "img-001".into(),
    };
    let allowed = [ResolvedEntity {
        detection: EntityDetection::new("Riverton Hawks", 7, Confidence::High),
        player_name: Some("Marcus Doyle".into()),
        position: Some("quarterback".into()),
        team_name: "Riverton Hawks".into(),
        status: ResolutionStatus::Resolved,
    }];
    let report = validate(&text, &meta, &allowed);
    println!("valid: {}", report.ok);

    // Naming a player that was not allowed is a hard failure.
    let wrong = text.replace("Marcus Doyle (7)", "Owen Fischer (31)");
    let bad = validate(&wrong, &meta, &allowed);
    for v in &bad.violations {
        println!("violation {:?}: {}", v.code, v.detail);
    }
    Ok(text)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
