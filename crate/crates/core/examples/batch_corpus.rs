//! Caption a directory of `<stem>.meta.json` + image pairs, then score the
//! results against the directory's `ground_truth.jsonl`.
//!
//! Uses the scripted test corpus; point `dir` and the endpoints elsewhere
//! for real data. Run with `cargo run --example batch_corpus`.

use std::path::Path;

use capwire::service::{run_batch, BatchSummary, PartialConfig, ServiceConfig};

pub fn run_example() -> Result<BatchSummary, Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e");
    let script = format!("mock:{}", dir.join("two_level.json").display());
    let out = tempfile::tempdir()?;

    let cfg = ServiceConfig::from_layers(
        PartialConfig {
            level1_endpoint: Some(script.clone()),
            level2_endpoint: Some(script),
            roster_paths: Some(vec![dir.join("rosters.jsonl")]),
            annotator_fixtures: Some(dir.join("aux_annotations.json")),
            max_in_flight: Some(8),
            output_dir: Some(out.path().to_path_buf()),
            ..PartialConfig::default()
        },
        PartialConfig::default(),
    )?;

    let rt = tokio::runtime::Runtime::new()?;
    let outcome = rt.block_on(run_batch(&dir, &cfg))?;
    let s = &outcome.summary;
    println!(
        "{}/{} captioned, {:.1} images/s, peak concurrency {}",
        s.succeeded, s.total, s.images_per_second, s.max_in_flight_observed
    );
    if let Some(report) = &outcome.eval {
        print!("{}", report.table());
    }
    Ok(outcome.summary)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
