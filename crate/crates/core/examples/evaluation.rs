//! Entity precision/recall/F1 and caption token F1.
//!
//! Run with `cargo run --example evaluation`.

use capwire::domain::{Confidence::*, EntityDetection};
use capwire::eval::{entity_scores, token_f1, EntityScores};

pub fn run_example() -> (EntityScores, f64) {
    let predicted = [
        EntityDetection::new("Riverton Hawks", 7, High),
        EntityDetection::new("Riverton Hawks", 26, Low),
    ];
    let truth = [
        EntityDetection::new("Riverton Hawks", 7, High),
        EntityDetection::new("Lakeside Bears", 15, High),
    ];
    // Confidence plays no part in matching: (team, jersey) pairs only.
    let s = entity_scores(&predicted, &truth);
    println!("entity  P={:.3} R={:.3} F1={:.3}", s.precision, s.recall, s.f1);

    let caption = "Riverton Hawks quarterback Marcus Doyle (7) throws a pass.";
    let reference = "Riverton Hawks quarterback Marcus Doyle (7) throws the ball downfield.";
    let f1 = token_f1(caption, reference);
    println!("caption token F1={f1:.3}");
    (s, f1)
}

#[allow(dead_code)]
fn main() {
    run_example();
}
