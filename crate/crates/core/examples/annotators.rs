//! Run auxiliary annotators concurrently and merge their output into the
//! Level-2 context block.
//!
//! Run with `cargo run --example annotators`.

use std::collections::HashMap;
use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use capwire::annotate::{
    merge_annotations, run_annotators, AnnotationKind, Annotator, AuxAnnotation, FixtureAnnotator,
};
use capwire::ImageAsset;

fn png() -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    image::RgbImage::new(4, 4)
        .write_to(&mut out, image::ImageFormat::Png)
        .expect("encode png");
    out.into_inner()
}

pub fn run_example() -> Result<String, Box<dyn std::error::Error>> {
    let fixtures = Arc::new(HashMap::from([(
        "img-001".to_string(),
        vec![
            AuxAnnotation::new(AnnotationKind::OcrText, "7", 0.77),
            AuxAnnotation::new(AnnotationKind::Logo, "Riverton Hawks", 0.91),
            AuxAnnotation::new(AnnotationKind::Celebrity, "Marcus Doyle", 0.64),
        ],
    )]));
    // Two stubs over the same fixtures, each restricted to one kind,
    // stand in for separate vision services.
    let annotators: Vec<Arc<dyn Annotator>> = vec![
        Arc::new(FixtureAnnotator::new("logos", fixtures.clone()).only(AnnotationKind::Logo)),
        Arc::new(FixtureAnnotator::new("ocr", fixtures).only(AnnotationKind::OcrText)),
    ];
    let image = ImageAsset::new("img-001", png());

    let rt = tokio::runtime::Runtime::new()?;
    let run = rt.block_on(run_annotators(&annotators, &image, Duration::from_secs(1)));
    let block = merge_annotations(&run.lists);
    println!("{block}");
    Ok(block)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
