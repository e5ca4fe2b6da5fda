//! Build LEVEL1/LEVEL2 fine-tuning records, export them as JSONL and
//! re-validate the file.
//!
//! Run with `cargo run --example sft_dataset`.

use capwire::dataset::{build_dataset, export_dataset, validate_dataset, AnnotatedImage, DatasetReport, Level2Policy};
use capwire::domain::{Confidence, EntityDetection, ImageMetadata};
use capwire::{PipelineConfig, Roster, RosterEntry, RosterSet};
use chrono::NaiveDate;

pub fn run_example() -> Result<DatasetReport, Box<dyn std::error::Error>> {
    let rosters = RosterSet::new(vec![Roster {
        team_name: "Riverton Hawks".into(),
        team_aliases: vec![],
        effective_date: NaiveDate::from_ymd_opt(2025, 9, 1).unwrap(),
        entries: vec![
            RosterEntry::player(7, "Marcus Doyle", "quarterback"),
            RosterEntry::player(88, "Tomas Reyes", "wide receiver"),
        ],
    }])?;
    let meta = ImageMetadata {
        event_date: NaiveDate::from_ymd_opt(2025, 9, 7).unwrap(),
        location: "Riverton, Ohio, USA".into(),
        venue: None,
        event_title: "Bears at Hawks".into(),
        credit: "Mandatory Credit: Pat Lee-Wire Photos".into(),
        source_id: "img-001".into(),
    };
    // The receiver is only a LOW label, yet the reference caption names
    // him; the scrub policy drops that clause instead of skipping the image.
    let image = AnnotatedImage {
        image_ref: "img-001.png".into(),
        metadata: meta,
        gt_detections: vec![
            EntityDetection::new("Riverton Hawks", 7, Confidence::High),
            EntityDetection::new("Riverton Hawks", 88, Confidence::Low),
        ],
        gt_caption: "Sep 7, 2025; Riverton, Ohio, USA; Riverton Hawks quarterback Marcus Doyle (7) \
                     throws a pass, as Riverton Hawks wide receiver Tomas Reyes (88) runs a route. \
                     Mandatory Credit: Pat Lee-Wire Photos"
            .into(),
        aux: vec![],
    };

    let outcome = build_dataset(&[image], &rosters, Level2Policy::Scrub, &PipelineConfig::default());
    for r in &outcome.records {
        println!("{:?} target: {}", r.level, r.target.replace('\n', " | "));
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("sft.jsonl");
    export_dataset(&outcome.records, &path)?;
    let report = validate_dataset(&path, "Mandatory Credit:")?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
