//! Every example runs and produces what it advertises.

#[path = "../examples/caption_grammar.rs"]
mod caption_grammar;
#[path = "../examples/roster_resolution.rs"]
mod roster_resolution;
#[path = "../examples/annotators.rs"]
mod annotators;
#[path = "../examples/two_level_pipeline.rs"]
mod two_level_pipeline;
#[path = "../examples/sft_dataset.rs"]
mod sft_dataset;
#[path = "../examples/evaluation.rs"]
mod evaluation;
#[path = "../examples/batch_corpus.rs"]
mod batch_corpus;
#[path = "../examples/http_service.rs"]
mod http_service;

#[test]
fn caption_grammar_example() {
    let text = caption_grammar::run_example().unwrap();
    assert!(text.starts_with("Sep 7, 2025; Riverton, Ohio, USA; "));
}

#[test]
fn roster_resolution_example() {
    let phrases = roster_resolution::run_example().unwrap();
    assert_eq!(phrases, ["Riverton Hawks running back Andre Whitfield (22)"]);
}

#[test]
fn annotators_example() {
    let block = annotators::run_example().unwrap();
    assert_eq!(block, "LOGO: Riverton Hawks (score=0.91)\nOCR_TEXT: 7 (score=0.77)");
}

#[test]
fn two_level_pipeline_example() {
    let r = two_level_pipeline::run_example().unwrap();
    assert!(r.level2_repaired);
    assert_eq!(
        r.caption_text.as_deref(),
        Some(
            "Sep 7, 2025; Riverton, Ohio, USA; Riverton Hawks quarterback Marcus Doyle (7) throws a pass. \
             Mandatory Credit: Pat Lee-Wire Photos"
        )
    );
}

#[test]
fn sft_dataset_example() {
    let report = sft_dataset::run_example().unwrap();
    assert!(report.is_clean());
    assert_eq!(report.records, 2);
}

#[test]
fn evaluation_example() {
    let (s, f1) = evaluation::run_example();
    assert_eq!(s.f1, 0.5);
    assert!(f1 > 0.5 && f1 < 1.0);
}

#[test]
fn batch_corpus_example() {
    let s = batch_corpus::run_example().unwrap();
    assert_eq!((s.total, s.succeeded), (20, 20));
}

#[test]
fn http_service_example() {
    let view = http_service::run_example().unwrap();
    assert_eq!(view["status"], "DONE");
}
