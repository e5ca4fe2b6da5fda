//! One image through both model levels, with scripted backends.
//!
//! Swap the scripted backends for `RemoteBackend`s to talk to real models.
//! Run with `cargo run --example two_level_pipeline`.

use std::collections::HashMap;
use std::io::Cursor;
use std::sync::Arc;

use capwire::domain::ImageMetadata;
use capwire::pipeline::{Scripted, ScriptedBackend};
use capwire::{run_pipeline, Backends, ImageAsset, PipelineConfig, PipelineResult, Roster, RosterEntry, RosterSet};
use chrono::NaiveDate;

fn scripted(label: &str, answer: &str) -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::new(
        label,
        HashMap::from([("img-001".to_string(), Scripted::One(answer.to_string()))]),
    ))
}

pub fn run_example() -> Result<PipelineResult, Box<dyn std::error::Error>> {
    let rosters = RosterSet::new(vec![Roster {
        team_name: "Riverton Hawks".into(),
        team_aliases: vec!["Hawks".into()],
        effective_date: NaiveDate::from_ymd_opt(2025, 9, 1).unwrap(),
        entries: vec![RosterEntry::player(7, "Marcus Doyle", "quarterback")],
    }])?;
    let meta = ImageMetadata {
        event_date: NaiveDate::from_ymd_opt(2025, 9, 7).unwrap(),
        location: "Riverton, Ohio, USA".into(),
        venue: Some("Hawks Field".into()),
        event_title: "Bears at Hawks".into(),
        credit: "Mandatory Credit: Pat Lee-Wire Photos".into(),
        source_id: "img-001".into(),
    };
    let mut png = Cursor::new(Vec::new());
    image::RgbImage::new(8, 8).write_to(&mut png, image::ImageFormat::Png)?;
    let image = ImageAsset::new("img-001", png.into_inner());

    // The Level-2 answer lacks date, location and credit; the pipeline
    // rebuilds them from metadata.
    let backends = Backends {
        level1: scripted("level1", "Hawks (7) [HIGH]"),
        level2: scripted("level2", "Riverton Hawks quarterback Marcus Doyle (7) throws a pass"),
    };

    let rt = tokio::runtime::Runtime::new()?;
    let result = rt.block_on(run_pipeline(&image, &meta, &rosters, &backends, &[], &PipelineConfig::default()));

    println!("detections: {:?}", result.detections);
    println!("repaired:   {}", result.level2_repaired);
    println!("caption:    {}", result.caption_text.as_deref().unwrap_or("-"));
    println!("valid:      {}", result.validation.as_ref().is_some_and(|v| v.ok));
    for (stage, ms) in &result.timings {
        println!("  {stage:?}: {ms:.2} ms");
    }
    Ok(result)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
