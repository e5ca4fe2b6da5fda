//! Entity-level precision/recall/F1 and caption similarity.
//!
//! Entity matches are exact `(team, jersey)` pairs compared as sets; the
//! confidence label is ignored. Corpus scores are micro-averaged over
//! pooled counts. Caption similarity defaults to multiset token F1; an
//! embedding endpoint can be plugged in for BERTScore-style matching.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption;
use crate::domain::{normalize_key, EntityDetection, ResolutionStatus};
use crate::pipeline::PipelineResult;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl MatchCounts {
    pub fn fp(&self) -> usize {
        self.predicted - self.tp
    }

    pub fn fn_(&self) -> usize {
        self.gold - self.tp
    }

    fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    /// Precision/recall with the empty-set conventions: an empty side
    /// scores 1 when the other side is empty too, 0 otherwise.
    pub fn scores(&self) -> EntityScores {
        let ratio = |num: usize, den: usize, other: usize| match (den, other) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => num as f64 / den as f64,
        };
        let precision = ratio(self.tp, self.predicted, self.gold);
        let recall = ratio(self.tp, self.gold, self.predicted);
        EntityScores {
            precision,
            recall,
            f1: harmonic(precision, recall),
            counts: *self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: MatchCounts,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn entity_key(d: &EntityDetection) -> (String, u8) {
    (normalize_key(&d.team_ref), d.jersey_number)
}

pub fn entity_counts(pred: &[EntityDetection], gt: &[EntityDetection]) -> MatchCounts {
    let p: BTreeSet<_> = pred.iter().map(entity_key).collect();
    let g: BTreeSet<_> = gt.iter().map(entity_key).collect();
    MatchCounts {
        tp: p.intersection(&g).count(),
        predicted: p.len(),
        gold: g.len(),
    }
}

pub fn entity_scores(pred: &[EntityDetection], gt: &[EntityDetection]) -> EntityScores {
    entity_counts(pred, gt).scores()
}

/// Lowercased, punctuation-stripped whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.chars()
                .filter(|c| !c.is_ascii_punctuation() && !c.is_ascii_control())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Multiset token-overlap F1.
pub fn token_f1(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refs = tokenize(reference);
    match (cand.is_empty(), refs.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &refs {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &cand {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    harmonic(
        overlap as f64 / cand.len() as f64,
        overlap as f64 / refs.len() as f64,
    )
}

/// Ground truth for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub source_id: String,
    #[serde(default)]
    pub detections: Vec<EntityDetection>,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub source_id: String,
    pub entity: EntityScores,
    pub caption_score: f64,
    pub errored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entity_precision: f64,
    pub entity_recall: f64,
    pub entity_f1: f64,
    pub counts: MatchCounts,
    pub caption_score_mean: f64,
    pub caption_score_std: f64,
    pub n_images: usize,
    pub per_image: Vec<ImageScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("cannot evaluate an empty corpus")]
    Empty,
    #[error("item {index}: result {result:?} is paired with ground truth {truth:?}")]
    Misaligned {
        index: usize,
        result: String,
        truth: String,
    },
}

/// Level-1 predictions with team names replaced by their canonical form
/// whenever the roster recognised the team.
pub fn predicted_entities(r: &PipelineResult) -> Vec<EntityDetection> {
    if r.resolved.len() == r.detections.len() {
        r.resolved
            .iter()
            .map(|e| {
                let mut d = e.detection.clone();
                if e.status != ResolutionStatus::UnknownTeam {
                    d.team_ref = e.team_name.clone();
                }
                d
            })
            .collect()
    } else {
        r.detections.clone()
    }
}

fn caption_of(r: &PipelineResult) -> Option<String> {
    r.caption_text
        .clone()
        .or_else(|| r.caption.as_ref().and_then(|c| caption::compose(c).ok()))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Micro-averaged entity metrics plus caption similarity mean and sample
/// standard deviation. Errored images score 0 on the caption and contribute
/// every ground-truth entity as a miss.
pub fn evaluate_corpus(items: &[(PipelineResult, GroundTruth)]) -> Result<EvalReport, EvalError> {
    evaluate_corpus_with(items, token_f1)
}

pub fn evaluate_corpus_with(
    items: &[(PipelineResult, GroundTruth)],
    similarity: impl Fn(&str, &str) -> f64,
) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut pooled = MatchCounts::default();
    let mut per_image = Vec::with_capacity(items.len());
    for (index, (result, truth)) in items.iter().enumerate() {
        if result.source_id != truth.source_id {
            return Err(EvalError::Misaligned {
                index,
                result: result.source_id.clone(),
                truth: truth.source_id.clone(),
            });
        }
        let errored = !result.is_ok();
        let pred = if errored {
            Vec::new()
        } else {
            predicted_entities(result)
        };
        let counts = entity_counts(&pred, &truth.detections);
        pooled.add(counts);
        let caption_score = match (errored, caption_of(result)) {
            (false, Some(text)) => similarity(&text, &truth.caption),
            _ => 0.0,
        };
        per_image.push(ImageScore {
            source_id: result.source_id.clone(),
            entity: counts.scores(),
            caption_score,
            errored,
        });
    }
    let scores: Vec<f64> = per_image.iter().map(|s| s.caption_score).collect();
    let (mean, std) = mean_std(&scores);
    let totals = pooled.scores();
    Ok(EvalReport {
        entity_precision: totals.precision,
        entity_recall: totals.recall,
        entity_f1: totals.f1,
        counts: pooled,
        caption_score_mean: mean,
        caption_score_std: std,
        n_images: items.len(),
        per_image,
        notices: Vec::new(),
    })
}

/// Reads one JSON value per non-blank line (results or ground truth files).
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> std::io::Result<Vec<T>> {
    std::fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), i + 1),
                )
            })
        })
        .collect()
}

/// Pairs results with ground truth by `source_id`, in ground-truth order.
pub fn align(
    results: Vec<PipelineResult>,
    truths: Vec<GroundTruth>,
) -> Result<Vec<(PipelineResult, GroundTruth)>, EvalError> {
    let mut by_id: HashMap<String, PipelineResult> =
        results.into_iter().map(|r| (r.source_id.clone(), r)).collect();
    truths
        .into_iter()
        .enumerate()
        .map(|(index, t)| match by_id.remove(&t.source_id) {
            Some(r) => Ok((r, t)),
            None => Err(EvalError::Misaligned {
                index,
                result: String::new(),
                truth: t.source_id,
            }),
        })
        .collect()
}

impl EvalReport {
    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>10}", "metric", "value");
        let _ = writeln!(out, "{:<24} {:>10}", "images", self.n_images);
        let _ = writeln!(out, "{:<24} {:>10.4}", "entity precision", self.entity_precision);
        let _ = writeln!(out, "{:<24} {:>10.4}", "entity recall", self.entity_recall);
        let _ = writeln!(out, "{:<24} {:>10.4}", "entity F1", self.entity_f1);
        let _ = writeln!(
            out,
            "{:<24} {:>10}",
            "TP / FP / FN",
            format!("{}/{}/{}", self.counts.tp, self.counts.fp(), self.counts.fn_())
        );
        let _ = writeln!(
            out,
            "{:<24} {:>10}",
            "caption score (x100)",
            format!(
                "{:.1} ± {:.1}",
                self.caption_score_mean * 100.0,
                self.caption_score_std * 100.0
            )
        );
        for n in &self.notices {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

/// Outcome of a pluggable similarity computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    pub value: f64,
    /// Set when the configured backend failed and token F1 was used instead.
    pub fallback_notice: Option<String>,
}

#[async_trait]
pub trait SimilarityBackend: Send + Sync {
    async fn similarity(&self, candidate: &str, reference: &str) -> Similarity;
}

/// The in-tree default: multiset token F1.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1;

#[async_trait]
impl SimilarityBackend for TokenF1 {
    async fn similarity(&self, candidate: &str, reference: &str) -> Similarity {
        Similarity {
            value: token_f1(candidate, reference),
            fallback_notice: None,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// BERTScore-style matching against a remote embedding endpoint.
///
/// `POST {base_url}/embed` with `{"text": ...}` returns
/// `{"embeddings": [[f64; d]; n_tokens]}` of contextual token vectors.
/// Each token is greedily matched to its most similar counterpart by
/// cosine; precision and recall average those maxima and F1 combines them.
/// Any failure falls back to [`token_f1`] with a notice.
pub struct EmbeddingSimilarity {
    base_url: String,
    client: reqwest::Client,
}

impl EmbeddingSimilarity {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into(),
            client: reqwest::Client::builder()
                .timeout(timeout)
                .build()
                .expect("reqwest client builds"),
        }
    }

    async fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>, String> {
        let url = format!("{}/embed", self.base_url.trim_end_matches('/'));
        let resp = self
            .client
            .post(url)
            .json(&EmbedRequest { text })
            .send()
            .await
            .map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("status {}", resp.status()));
        }
        let body: EmbedResponse = resp.json().await.map_err(|e| e.to_string())?;
        Ok(body.embeddings)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy max-cosine F1 between two sets of token embeddings.
pub fn greedy_match_f1(cand: &[Vec<f64>], refs: &[Vec<f64>]) -> f64 {
    match (cand.is_empty(), refs.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let best = |xs: &[Vec<f64>], ys: &[Vec<f64>]| {
        xs.iter()
            .map(|x| ys.iter().map(|y| cosine(x, y)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / xs.len() as f64
    };
    harmonic(best(cand, refs), best(refs, cand))
}

#[async_trait]
impl SimilarityBackend for EmbeddingSimilarity {
    async fn similarity(&self, candidate: &str, reference: &str) -> Similarity {
        let (c, r) = tokio::join!(self.embed(candidate), self.embed(reference));
        match (c, r) {
            (Ok(c), Ok(r)) => Similarity {
                value: greedy_match_f1(&c, &r),
                fallback_notice: None,
            },
            (Err(e), _) | (_, Err(e)) => Similarity {
                value: token_f1(candidate, reference),
                fallback_notice: Some(format!(
                    "embedding backend unavailable ({e}); fell back to token F1"
                )),
            },
        }
    }
}

/// Corpus evaluation with an async similarity backend; fallback notices are
/// collected (deduplicated) into the report.
pub async fn evaluate_corpus_async(
    items: &[(PipelineResult, GroundTruth)],
    backend: &dyn SimilarityBackend,
) -> Result<EvalReport, EvalError> {
    let mut cache = HashMap::new();
    let mut notices = BTreeSet::new();
    for (r, t) in items {
        if let (true, Some(text)) = (r.is_ok(), caption_of(r)) {
            let s = backend.similarity(&text, &t.caption).await;
            if let Some(n) = s.fallback_notice {
                notices.insert(n);
            }
            cache.insert(r.source_id.clone(), s.value);
        }
    }
    let mut report = evaluate_corpus(items)?;
    for img in &mut report.per_image {
        if let Some(v) = cache.get(&img.source_id) {
            img.caption_score = *v;
        }
    }
    let scores: Vec<f64> = report.per_image.iter().map(|s| s.caption_score).collect();
    (report.caption_score_mean, report.caption_score_std) = mean_std(&scores);
    report.notices = notices.into_iter().collect();
    Ok(report)
}
