//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use capwire::annotate::{load_fixtures, Annotator, FixtureAnnotator};
use capwire::caption::{CaptionParts, EntityMention, DEFAULT_CREDIT_PREFIX};
use capwire::domain::{format_date, Confidence, EntityDetection, ImageMetadata};
use capwire::pipeline::{Backends, Level, MockScript, ScriptedBackend};
use capwire::roster::{Roster, RosterEntry, RosterSet, POSITIONS};
use capwire::service::{Components, QueueOptions, Service};
use capwire::{load_rosters, PipelineConfig, PipelineResult};
use chrono::NaiveDate;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e")
}

pub fn fixture_rosters() -> RosterSet {
    load_rosters(&[fixture_dir().join("rosters.jsonl")]).expect("fixture rosters load")
}

/// The 20 fixture images in source-id order.
pub fn fixture_corpus() -> Vec<(ImageMetadata, Vec<u8>)> {
    let dir = fixture_dir();
    let mut metas: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".meta.json"))
        .collect();
    metas.sort();
    metas
        .into_iter()
        .map(|p| {
            let meta: ImageMetadata = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
            let png = dir.join(format!("{}.png", meta.source_id));
            (meta, std::fs::read(png).unwrap())
        })
        .collect()
}

pub fn script(name: &str) -> MockScript {
    MockScript::load(&fixture_dir().join(name)).unwrap()
}

pub fn scripted_backends(script: &MockScript, delay_ms: u64) -> (Arc<ScriptedBackend>, Arc<ScriptedBackend>) {
    let delay = std::time::Duration::from_millis(delay_ms);
    (
        Arc::new(ScriptedBackend::from_script(script, Level::Level1).with_delay(delay)),
        Arc::new(ScriptedBackend::from_script(script, Level::Level2).with_delay(delay)),
    )
}

pub fn fixture_annotators() -> Vec<Arc<dyn Annotator>> {
    let fx = load_fixtures(&fixture_dir().join("aux_annotations.json")).unwrap();
    vec![Arc::new(FixtureAnnotator::new("fixtures", Arc::new(fx)))]
}

pub fn fixture_components(script_name: &str, delay_ms: u64) -> Components {
    let (l1, l2) = scripted_backends(&script(script_name), delay_ms);
    Components {
        rosters: Arc::new(fixture_rosters()),
        backends: Backends { level1: l1, level2: l2 },
        annotators: fixture_annotators(),
        pipeline: PipelineConfig::default(),
    }
}

/// Runs the whole fixture corpus through a queued service; results come
/// back in corpus order.
pub async fn run_fixture(script_name: &str, max_in_flight: usize, delay_ms: u64) -> Vec<PipelineResult> {
    let service = Service::new(
        fixture_components(script_name, delay_ms),
        QueueOptions {
            max_in_flight,
            ..QueueOptions::default()
        },
    );
    let mut ids = Vec::new();
    for (meta, bytes) in fixture_corpus() {
        ids.push(service.submit(bytes, meta).await.unwrap());
    }
    let mut out = Vec::new();
    for id in ids {
        out.push(service.wait(&id).await.unwrap().result.unwrap());
    }
    out
}

pub fn tiny_png() -> Vec<u8> {
    let img = image::RgbImage::from_pixel(4, 4, image::Rgb([10, 120, 200]));
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).unwrap();
    buf.into_inner()
}

pub fn meta(source_id: &str) -> ImageMetadata {
    ImageMetadata {
        event_date: NaiveDate::from_ymd_opt(2025, 2, 9).unwrap(),
        location: "New Orleans, Louisiana, USA".into(),
        venue: Some("Caesars Superdome".into()),
        event_title: "Championship Game".into(),
        credit: "Mandatory Credit: J. Smith-Wire Photos".into(),
        source_id: source_id.into(),
    }
}

// ---------------------------------------------------------------------------
// Seeded random generators
// ---------------------------------------------------------------------------

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mir", "tan", "ve", "dor", "sel", "quin", "ra", "bo", "zen", "fa", "gul", "ne",
];
const LOWER_WORDS: &[&str] = &[
    "the", "ball", "runs", "throws", "during", "first", "quarter", "against", "and", "field",
    "celebrates", "touchdown", "with", "a", "pass", "after", "play", "of",
];

pub fn word(rng: &mut StdRng, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

pub fn capitalized(rng: &mut StdRng) -> String {
    let w = word(rng, 1, 3);
    let mut c = w.chars();
    let first = c.next().unwrap().to_uppercase().collect::<String>();
    first + c.as_str()
}

/// Two or three capitalised tokens, optionally with an apostrophe or hyphen.
pub fn person_name(rng: &mut StdRng) -> String {
    let n = rng.gen_range(2..=3);
    let mut tokens: Vec<String> = (0..n).map(|_| capitalized(rng)).collect();
    match rng.gen_range(0..6) {
        0 => tokens[n - 1] = format!("O'{}", tokens[n - 1]),
        1 => tokens[n - 1] = format!("{}-{}", tokens[n - 1], capitalized(rng)),
        2 => tokens[0] = format!("{}.", &tokens[0][..1]),
        _ => {}
    }
    tokens.join(" ")
}

pub fn random_date(rng: &mut StdRng) -> NaiveDate {
    let base = NaiveDate::from_ymd_opt(1900, 1, 1).unwrap();
    base + chrono::Duration::days(rng.gen_range(0..73_000))
}

/// A valid caption plus the mentions the generator put into its body,
/// in order. Words before a mention are lower-case so a name never
/// absorbs its neighbour.
pub fn random_caption(rng: &mut StdRng) -> (CaptionParts, Vec<EntityMention>) {
    let date = format_date(random_date(rng));
    let location = format!("{}, {}, USA", capitalized(rng), capitalized(rng));
    let mut mentions = Vec::new();
    let mut chunks: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(1..=10) {
        if rng.gen_bool(0.3) {
            let m = EntityMention::new(person_name(rng), rng.gen_range(0..=99));
            chunks.push(m.literal());
            mentions.push(m);
            chunks.push((*LOWER_WORDS.choose(rng).unwrap()).to_string());
        } else {
            let mut w = (*LOWER_WORDS.choose(rng).unwrap()).to_string();
            if rng.gen_bool(0.1) {
                w.push(',');
            }
            chunks.push(w);
        }
    }
    let body = format!("{}.", chunks.join(" ").trim_end_matches(','));
    let credit = format!("{DEFAULT_CREDIT_PREFIX} {}-{}", person_name(rng), capitalized(rng));
    let parts = CaptionParts {
        date_text: date,
        location_text: location,
        body,
        credit_text: credit,
        entity_mentions: mentions.clone(),
    };
    (parts, mentions)
}

pub fn random_roster(rng: &mut StdRng, team_name: String, n_players: usize) -> Roster {
    let mut jerseys: Vec<u8> = (0..=99).collect();
    jerseys.shuffle(rng);
    let mut entries: Vec<RosterEntry> = jerseys[..n_players]
        .iter()
        .map(|&j| RosterEntry::player(j, person_name(rng), *POSITIONS.choose(rng).unwrap()))
        .collect();
    entries.push(RosterEntry {
        jersey_number: None,
        player_name: person_name(rng),
        position: "head coach".into(),
    });
    Roster {
        team_aliases: vec![format!("{} Alias", team_name)],
        team_name,
        effective_date: NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
        entries,
    }
}

pub fn random_roster_set(rng: &mut StdRng) -> RosterSet {
    let n = rng.gen_range(1..=4);
    let teams = (0..n)
        .map(|i| {
            let name = format!("{} {}", capitalized(rng), ["Hawks", "Bears", "Owls", "Rams"][i]);
            let players = rng.gen_range(0..=12);
            random_roster(rng, name, players)
        })
        .collect();
    RosterSet::new(teams).expect("generated rosters are valid")
}

pub fn random_confidence(rng: &mut StdRng) -> Confidence {
    if rng.gen_bool(0.5) {
        Confidence::High
    } else {
        Confidence::Low
    }
}

/// A detection that may or may not hit the roster set.
pub fn random_detection(rng: &mut StdRng, rosters: &RosterSet) -> EntityDetection {
    let teams = rosters.teams();
    let team_ref = match rng.gen_range(0..5) {
        0 => capitalized(rng),
        1 => {
            let t = teams.choose(rng).unwrap();
            t.team_aliases[0].to_uppercase()
        }
        2 => format!("  {}  ", teams.choose(rng).unwrap().team_name.to_lowercase()),
        _ => teams.choose(rng).unwrap().team_name.clone(),
    };
    let jersey = if rng.gen_bool(0.7) {
        let t = teams.choose(rng).unwrap();
        t.entries
            .iter()
            .filter_map(|e| e.jersey_number)
            .collect::<Vec<_>>()
            .choose(rng)
            .copied()
            .unwrap_or(0)
    } else {
        rng.gen_range(0..=99)
    };
    EntityDetection::new(team_ref, jersey, random_confidence(rng))
}
