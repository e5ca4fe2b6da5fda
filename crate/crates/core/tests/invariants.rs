//! Property tests for the per-module invariants.

mod common;

use std::sync::Arc;

use capwire::annotate::{merge_annotations, AnnotationKind, Annotator, AuxAnnotation, FixtureAnnotator};
use capwire::caption::{self, extract_mentions, CaptionParts, DEFAULT_CREDIT_PREFIX};
use capwire::dataset::{build_level1_record, export_dataset, read_dataset, AnnotatedImage, SftRecord};
use capwire::domain::{normalize_key, Confidence, EntityDetection, ImageAsset, ResolutionStatus};
use capwire::eval::{entity_scores, token_f1};
use capwire::pipeline::{allowed_entities, build_level2_prompt, parse_level1_response};
use capwire::roster::{entity_phrase, filter_high, TeamMatch};
use capwire::PipelineConfig;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ----- caption grammar -----------------------------------------------------

/// Walks back over capitalised tokens in front of each `(N)` token.
fn brute_force_mentions(body: &str) -> Vec<(String, u8)> {
    let tokens: Vec<&str> = body.split(' ').collect();
    let name_token = |s: &str| {
        s.chars().next().is_some_and(char::is_uppercase)
            && s.chars().all(|c| c.is_alphabetic() || ".'-".contains(c))
    };
    let mut out = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        let Some(rest) = t.strip_prefix('(') else { continue };
        let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
        if !(1..=2).contains(&digits.len()) || !rest[digits.len()..].starts_with(')') {
            continue;
        }
        let mut start = i;
        while start > 0 && name_token(tokens[start - 1]) {
            start -= 1;
        }
        if i - start >= 2 {
            out.push((tokens[start..i].join(" "), digits.parse().unwrap()));
        }
    }
    out
}

const BODY_TOKENS: &[&str] = &[
    "runs", "the", "Ball", "Pat", "Doe", "O'Neil", "Smith-Jones", "J.", "(1)", "(12)", "(123)",
    "(7),", "(x)", "()", "and", "Team", "A", "quarterback", "during", "Ünal", "said,", "(05)",
];

#[test]
fn mention_extraction_matches_brute_force_on_200_captions() {
    let mut r = rng(200);
    let mut total = 0;
    for _ in 0..200 {
        let n = r.gen_range(1..25);
        let body: Vec<&str> = (0..n).map(|_| *BODY_TOKENS.choose(&mut r).unwrap()).collect();
        let body = body.join(" ");
        let lib: Vec<(String, u8)> = extract_mentions(&body)
            .into_iter()
            .map(|m| (m.player_name, m.jersey_number))
            .collect();
        assert_eq!(lib, brute_force_mentions(&body), "body: {body:?}");
        total += lib.len();
    }
    assert!(total > 50, "corpus exercised too few mentions ({total})");
}

proptest! {
    #[test]
    fn compose_parse_round_trip(seed in any::<u64>()) {
        let (parts, _) = common::random_caption(&mut rng(seed));
        let text = caption::compose(&parts).unwrap();
        prop_assert_eq!(caption::parse(&text).unwrap(), parts);
    }

    #[test]
    fn compose_is_injective(a in any::<u64>(), b in any::<u64>()) {
        let (p, _) = common::random_caption(&mut rng(a));
        let (q, _) = common::random_caption(&mut rng(b));
        if p != q {
            prop_assert_ne!(caption::compose(&p).unwrap(), caption::compose(&q).unwrap());
        }
    }

    #[test]
    fn separator_inside_free_text_is_rejected(seed in any::<u64>(), field in 0usize..3) {
        let (mut parts, _) = common::random_caption(&mut rng(seed));
        match field {
            0 => parts.location_text.push_str("; extra"),
            1 => parts.body.insert_str(0, "a; "),
            _ => parts.credit_text.push_str("; x"),
        }
        prop_assert!(caption::compose(&parts).is_err());
    }
}

// ----- roster resolver -----------------------------------------------------

proptest! {
    #[test]
    fn normalize_is_idempotent_and_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rosters = common::random_roster_set(&mut r);
        for t in rosters.teams() {
            prop_assert_eq!(rosters.normalize_team_name(&t.team_name), TeamMatch::Known(&t.team_name));
        }
        let d = common::random_detection(&mut r, &rosters);
        prop_assert_eq!(rosters.normalize_team_name(&d.team_ref), rosters.normalize_team_name(&d.team_ref));
        if let TeamMatch::Known(c) = rosters.normalize_team_name(&d.team_ref) {
            prop_assert_eq!(rosters.normalize_team_name(c), TeamMatch::Known(c));
        }
    }

    #[test]
    fn resolve_is_total_and_phrases_re_extract(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rosters = common::random_roster_set(&mut r);
        for _ in 0..8 {
            let d = common::random_detection(&mut r, &rosters);
            let e = rosters.resolve(&d);
            match e.status {
                ResolutionStatus::Resolved => {
                    let phrase = entity_phrase(&e).unwrap();
                    let ms = extract_mentions(&phrase);
                    prop_assert_eq!(ms.len(), 1);
                    prop_assert_eq!(Some(ms[0].player_name.as_str()), e.player_name.as_deref());
                    prop_assert_eq!(ms[0].jersey_number, d.jersey_number);
                }
                ResolutionStatus::UnknownTeam | ResolutionStatus::UnknownJersey => {
                    prop_assert!(e.player_name.is_none());
                    prop_assert!(entity_phrase(&e).is_err());
                }
            }
        }
    }

    #[test]
    fn filter_high_is_idempotent_and_shrinking(
        ds in prop::collection::vec((0u8..5, any::<bool>()), 0..12)
    ) {
        let ds: Vec<EntityDetection> = ds
            .into_iter()
            .map(|(j, h)| EntityDetection::new("Team A", j, if h { Confidence::High } else { Confidence::Low }))
            .collect();
        let once = filter_high(&ds);
        prop_assert_eq!(filter_high(&once), once.clone());
        prop_assert!(once.len() <= ds.len());
        prop_assert!(once.iter().all(|d| d.confidence == Confidence::High));
    }
}

// ----- annotator adapters --------------------------------------------------

fn kind_strategy() -> impl Strategy<Value = AnnotationKind> {
    prop_oneof![
        Just(AnnotationKind::Celebrity),
        Just(AnnotationKind::Logo),
        Just(AnnotationKind::OcrText),
        Just(AnnotationKind::GenericCaption),
    ]
}

proptest! {
    #[test]
    fn merge_ignores_input_order(
        items in prop::collection::vec((kind_strategy(), "[a-c]{1,3}", 0u8..4), 0..12),
        split in 0usize..4,
        shuffle_seed in any::<u64>(),
    ) {
        let anns: Vec<AuxAnnotation> = items
            .into_iter()
            .map(|(k, p, s)| AuxAnnotation::new(k, p, f64::from(s) / 4.0))
            .collect();
        let mut lists: Vec<Vec<AuxAnnotation>> = vec![Vec::new(); split + 1];
        for (i, a) in anns.iter().enumerate() {
            lists[i % (split + 1)].push(a.clone());
        }
        let mut shuffled = anns.clone();
        shuffled.shuffle(&mut rng(shuffle_seed));
        prop_assert_eq!(merge_annotations(&lists), merge_annotations(&[shuffled]));
    }
}

#[tokio::test]
async fn fixture_annotator_is_deterministic() {
    let fx = capwire::annotate::load_fixtures(&common::fixture_dir().join("aux_annotations.json")).unwrap();
    let a = FixtureAnnotator::new("a", Arc::new(fx.clone()));
    let b = FixtureAnnotator::new("b", Arc::new(fx));
    for (meta, bytes) in common::fixture_corpus() {
        let img = ImageAsset::new(meta.source_id.clone(), bytes);
        assert_eq!(a.annotate(&img).await.unwrap(), b.annotate(&img).await.unwrap());
    }
}

// ----- level pipeline ------------------------------------------------------

proptest! {
    /// Under the default policy no LOW or unresolved entity phrase reaches
    /// the Level-2 prompt.
    #[test]
    fn level2_prompt_carries_only_high_resolved_phrases(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rosters = common::random_roster_set(&mut r);
        let resolved: Vec<_> = (0..r.gen_range(0..8))
            .map(|_| rosters.resolve(&common::random_detection(&mut r, &rosters)))
            .collect();
        let allowed = allowed_entities(&resolved);
        let req = build_level2_prompt(&common::meta("p"), &rosters, &allowed, "", &PipelineConfig::default());
        let text = format!("{}\n{}", req.system_text, req.user_text);
        for m in extract_mentions(&text) {
            prop_assert!(
                resolved.iter().any(|e| e.is_resolved()
                    && e.detection.confidence == Confidence::High
                    && e.detection.jersey_number == m.jersey_number
                    && e.player_name.as_deref() == Some(m.player_name.as_str())),
                "prompt mentions {:?}", m
            );
        }
        for e in resolved.iter().filter(|e| !allowed.contains(e)) {
            if let Ok(p) = entity_phrase(e) {
                let high_twin = allowed.iter().any(|a| entity_phrase(a).ok().as_ref() == Some(&p));
                prop_assert!(high_twin || !text.contains(&p), "{} leaked", p);
            }
        }
    }
}

// ----- SFT dataset builder -------------------------------------------------

proptest! {
    #[test]
    fn level1_target_reparses_to_deduplicated_labels(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rosters = common::random_roster_set(&mut r);
        let dets: Vec<EntityDetection> = (0..r.gen_range(0..6))
            .map(|_| {
                let t = rosters.teams().choose(&mut r).unwrap();
                let name = match r.gen_range(0..3) {
                    0 => t.team_aliases[0].clone(),
                    1 => t.team_name.to_uppercase(),
                    _ => t.team_name.clone(),
                };
                EntityDetection::new(name, r.gen_range(0..=99), common::random_confidence(&mut r))
            })
            .collect();
        let image = AnnotatedImage {
            image_ref: "x.png".into(),
            metadata: common::meta("x"),
            gt_detections: dets.clone(),
            gt_caption: String::new(),
            aux: Vec::new(),
        };
        let rec = build_level1_record(&image, &rosters, &PipelineConfig::default()).unwrap();
        let parsed = parse_level1_response(&rec.target).unwrap();

        // Brute-force: canonical team, max confidence per key.
        let mut want: Vec<(String, u8, Confidence)> = Vec::new();
        for d in &dets {
            let TeamMatch::Known(team) = rosters.normalize_team_name(&d.team_ref) else { unreachable!() };
            match want.iter_mut().find(|w| w.0 == team && w.1 == d.jersey_number) {
                Some(w) => w.2 = w.2.max(d.confidence),
                None => want.push((team.to_string(), d.jersey_number, d.confidence)),
            }
        }
        want.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        let got: Vec<(String, u8, Confidence)> =
            parsed.into_iter().map(|d| (d.team_ref, d.jersey_number, d.confidence)).collect();
        prop_assert_eq!(got, want);
    }
}

#[test]
fn export_read_round_trip_is_lossless() {
    let images: Vec<AnnotatedImage> = std::fs::read_to_string(common::fixture_dir().join("sft_annotations.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let out = capwire::dataset::build_dataset(
        &images,
        &common::fixture_rosters(),
        capwire::dataset::Level2Policy::Strict,
        &PipelineConfig::default(),
    );
    assert!(out.errors.is_empty(), "{:?}", out.errors);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sft.jsonl");
    export_dataset(&out.records, &path).unwrap();
    let back: Vec<SftRecord> = read_dataset(&path).unwrap();
    assert_eq!(back, out.records);
    for r in &back {
        r.check(DEFAULT_CREDIT_PREFIX).unwrap();
    }
}

// ----- eval harness --------------------------------------------------------

fn det_strategy() -> impl Strategy<Value = Vec<EntityDetection>> {
    prop::collection::vec(
        (prop_oneof![Just("Team A"), Just("team  a"), Just("Team B")], 0u8..4),
        0..6,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(t, j)| EntityDetection::new(t, j, Confidence::High))
            .collect()
    })
}

proptest! {
    #[test]
    fn entity_scores_swap_exchanges_precision_and_recall(p in det_strategy(), g in det_strategy()) {
        let a = entity_scores(&p, &g);
        let b = entity_scores(&g, &p);
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn token_f1_symmetric_and_bag_semantics(
        a in prop::collection::vec("[A-Za-z.,]{1,4}", 0..10),
        b in prop::collection::vec("[A-Za-z.,]{1,4}", 0..10),
        seed in any::<u64>(),
    ) {
        let (sa, sb) = (a.join(" "), b.join(" "));
        prop_assert_eq!(token_f1(&sa, &sb), token_f1(&sb, &sa));
        let mut shuffled = a.clone();
        shuffled.shuffle(&mut rng(seed));
        prop_assert_eq!(token_f1(&shuffled.join(" "), &sb), token_f1(&sa, &sb));
        let f = token_f1(&sa, &sb);
        prop_assert!((0.0..=1.0).contains(&f));
    }
}

#[test]
fn normalize_key_collapses_case_and_space() {
    assert_eq!(normalize_key("  Team\tA  "), "team a");
    let parts = CaptionParts::from_segments("Feb 9, 2025", "X", "Pat Doe (1) runs.", "Mandatory Credit: Y");
    assert_eq!(parts.entity_mentions.len(), 1);
}
