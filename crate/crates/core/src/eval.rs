//! Micro-averaged scoring and diagnostic breakdowns.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::GroundedKnowledge;
use crate::model::{Example, RelationTriple};
use crate::postprocess::Prediction;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("prediction and gold ids differ: missing predictions for [{}], predictions without gold for [{}]", .missing.join(", "), .unexpected.join(", "))]
    MismatchedIds {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("duplicate prediction id {0}")]
    DuplicatePrediction(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub correct: usize,
    pub spurious: usize,
    pub missed: usize,
}

impl Counts {
    pub fn predicted(&self) -> usize {
        self.correct + self.spurious
    }

    pub fn gold(&self) -> usize {
        self.correct + self.missed
    }

    /// 0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted())
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold())
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            correct: self.correct + o.correct,
            spurious: self.spurious + o.spurious,
            missed: self.missed + o.missed,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Examples in the bucket.
    pub count: usize,
    pub counts: Counts,
}

impl BucketScore {
    fn from_counts(counts: Counts, count: usize) -> Self {
        Self {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            count,
            counts,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub examples: usize,
    pub confusion: Counts,
    /// Keyed by the number of (distinct) gold triples in an example.
    pub per_triple_size: BTreeMap<usize, BucketScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub found_info_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Compare surfaces case-insensitively (ablation only).
    pub casefold: bool,
}

fn key(t: &RelationTriple, cfg: &EvalConfig) -> RelationTriple {
    if cfg.casefold {
        RelationTriple::new(
            t.subject.to_lowercase(),
            t.relation.to_lowercase(),
            t.object.to_lowercase(),
        )
    } else {
        t.clone()
    }
}

/// Matches predictions against gold for one example; each gold triple can be
/// matched once.
pub fn example_counts(
    predicted: &[RelationTriple],
    gold: &[RelationTriple],
    cfg: &EvalConfig,
) -> Counts {
    let mut pool: HashMap<RelationTriple, usize> = HashMap::new();
    for g in gold {
        *pool.entry(key(g, cfg)).or_default() += 1;
    }
    let mut correct = 0;
    for p in predicted {
        if let Some(n) = pool.get_mut(&key(p, cfg)).filter(|n| **n > 0) {
            *n -= 1;
            correct += 1;
        }
    }
    Counts {
        correct,
        spurious: predicted.len() - correct,
        missed: gold.len() - correct,
    }
}

/// Pairs each gold example with its prediction, failing on any id mismatch.
fn align<'a>(
    predictions: &'a [Prediction],
    gold: &'a [Example],
) -> Result<Vec<(&'a Example, &'a Prediction)>, EvalError> {
    let mut by_id: HashMap<&str, &Prediction> = HashMap::new();
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.id.clone()));
        }
    }
    let gold_ids: HashSet<&str> = gold.iter().map(|e| e.id.as_str()).collect();
    let missing: Vec<String> = gold
        .iter()
        .filter(|e| !by_id.contains_key(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect();
    let unexpected: BTreeSet<String> = predictions
        .iter()
        .filter(|p| !gold_ids.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(EvalError::MismatchedIds {
            missing,
            unexpected: unexpected.into_iter().collect(),
        });
    }
    Ok(gold.iter().map(|e| (e, by_id[e.id.as_str()])).collect())
}

fn deduped_gold(ex: &Example) -> Vec<RelationTriple> {
    let unique = ex.unique_triples();
    if unique.len() != ex.gold_triples.len() {
        log::warn!(
            "example {}: {} duplicate gold triple(s) ignored",
            ex.id,
            ex.gold_triples.len() - unique.len()
        );
    }
    unique
}

pub fn micro_prf(predictions: &[Prediction], gold: &[Example]) -> Result<EvalReport, EvalError> {
    micro_prf_with(predictions, gold, &EvalConfig::default())
}

/// Micro P/R/F1 over all examples, plus the per-triple-size breakdown.
pub fn micro_prf_with(
    predictions: &[Prediction],
    gold: &[Example],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let pairs = align(predictions, gold)?;
    let mut total = Counts::default();
    let mut buckets: BTreeMap<usize, (Counts, usize)> = BTreeMap::new();
    for (ex, pred) in pairs {
        let g = deduped_gold(ex);
        let c = example_counts(&pred.triples, &g, cfg);
        total += c;
        let b = buckets.entry(g.len()).or_default();
        b.0 += c;
        b.1 += 1;
    }
    Ok(EvalReport {
        precision: total.precision(),
        recall: total.recall(),
        f1: total.f1(),
        examples: gold.len(),
        confusion: total,
        per_triple_size: buckets
            .into_iter()
            .map(|(k, (c, n))| (k, BucketScore::from_counts(c, n)))
            .collect(),
        found_info_ratio: None,
    })
}

/// Micro scores per gold-triple-count bucket.
pub fn triple_size_breakdown(
    predictions: &[Prediction],
    gold: &[Example],
) -> Result<BTreeMap<usize, BucketScore>, EvalError> {
    Ok(micro_prf(predictions, gold)?.per_triple_size)
}

/// Number of gold entities of an example: its distinct mention spans, or the
/// distinct triple arguments when no mentions are annotated.
pub fn gold_entity_count(ex: &Example) -> usize {
    if !ex.gold_entities.is_empty() {
        return ex
            .gold_entities
            .iter()
            .map(|m| (m.start, m.end))
            .collect::<HashSet<_>>()
            .len();
    }
    ex.gold_triples
        .iter()
        .flat_map(|t| [t.subject.as_str(), t.object.as_str()])
        .collect::<HashSet<_>>()
        .len()
}

/// Grounded facts per gold entity over one split; `None` without gold entities.
pub fn found_info_ratio(kg: &GroundedKnowledge, corpus: &[Example]) -> Option<f64> {
    let entities: usize = corpus.iter().map(gold_entity_count).sum();
    if entities == 0 {
        return None;
    }
    let facts: usize = corpus
        .iter()
        .map(|e| kg.get(&e.id).map_or(0, Vec::len))
        .sum();
    Some(facts as f64 / entities as f64)
}

// ---------------------------------------------------------------------------
// Multi-run aggregation and rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; 0 for a single value.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CombinedReport {
    pub runs: usize,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

pub fn combine(reports: &[EvalReport]) -> CombinedReport {
    let col = |f: fn(&EvalReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    CombinedReport {
        runs: reports.len(),
        precision: MeanStd::of(&col(|r| r.precision)),
        recall: MeanStd::of(&col(|r| r.recall)),
        f1: MeanStd::of(&col(|r| r.f1)),
    }
}

/// Aligned-column text rendering of a report.
pub fn render_table(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "bucket", "examples", "P", "R", "F1", "correct", "spurious", "missed"
    );
    let mut row = |name: &str, n: usize, c: &Counts| {
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>8} {:>8} {:>8}",
            name,
            n,
            c.precision(),
            c.recall(),
            c.f1(),
            c.correct,
            c.spurious,
            c.missed
        );
    };
    for (size, b) in &report.per_triple_size {
        row(&format!("T={size}"), b.count, &b.counts);
    }
    row("all", report.examples, &report.confusion);
    if let Some(r) = report.found_info_ratio {
        let _ = writeln!(s, "found-info ratio: {r:.4}");
    }
    s
}

/// CSV of the per-size breakdown.
pub fn breakdown_csv(report: &EvalReport) -> String {
    let mut s = String::from("triple_size,examples,precision,recall,f1,correct,spurious,missed\n");
    for (size, b) in &report.per_triple_size {
        let _ = writeln!(
            s,
            "{size},{},{},{},{},{},{},{}",
            b.count,
            b.precision,
            b.recall,
            b.f1,
            b.counts.correct,
            b.counts.spurious,
            b.counts.missed
        );
    }
    s
}
