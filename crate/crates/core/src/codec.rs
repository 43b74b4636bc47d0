//! Target linearization, parsing of generated text, and shuffle augmentation.
//!
//! A target renders each triple as `subject relation object` and joins
//! triples with ` ; `. Parsing goes the other way and never fails: anything
//! that cannot be read as a triple comes back as a rejected candidate.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{RelationSchema, RelationTriple, TRIPLE_SEPARATOR};

/// Separator between linearized triples.
pub const JOINER: &str = " ; ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinearizedTarget {
    pub text: String,
}

impl AsRef<str> for LinearizedTarget {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

/// Why a generated segment or triple was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoRelationFound,
    EmptySubject,
    EmptyObject,
    /// An argument matched no gold entity closely enough.
    LowSimilarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCandidate {
    pub raw: String,
    pub parsed: Option<RelationTriple>,
    pub reject_reason: Option<RejectReason>,
}

impl ParsedCandidate {
    fn accepted(raw: &str, t: RelationTriple) -> Self {
        Self {
            raw: raw.to_string(),
            parsed: Some(t),
            reject_reason: None,
        }
    }

    fn rejected(raw: &str, reason: RejectReason) -> Self {
        Self {
            raw: raw.to_string(),
            parsed: None,
            reject_reason: Some(reason),
        }
    }
}

pub fn linearize(triples: &[RelationTriple]) -> LinearizedTarget {
    let text = triples
        .iter()
        .map(|t| format!("{} {} {}", t.subject, t.relation, t.object))
        .collect::<Vec<_>>()
        .join(JOINER);
    LinearizedTarget { text }
}

/// Splits a linearized target back into its per-triple segments.
pub fn split_linearized(target: &str) -> Vec<&str> {
    if target.trim().is_empty() {
        return Vec::new();
    }
    target
        .split(TRIPLE_SEPARATOR)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Relation lookup over a schema, reusable across many generated strings.
#[derive(Debug, Clone)]
pub struct RelationMatcher {
    /// (surface, its whitespace tokens), longest surface first.
    relations: Vec<(String, Vec<String>)>,
}

impl RelationMatcher {
    pub fn new(schema: &RelationSchema) -> Self {
        let mut relations: Vec<(String, Vec<String>)> = schema
            .relations
            .iter()
            .filter(|r| !r.trim().is_empty())
            .map(|r| (r.clone(), r.split_whitespace().map(str::to_owned).collect()))
            .collect();
        // stable: equal lengths keep schema order
        relations.sort_by_key(|(r, _)| std::cmp::Reverse(r.chars().count()));
        Self { relations }
    }

    /// Reads one segment. The relation is the longest schema surface that
    /// occurs as a run of whole tokens; equally long surfaces are decided by
    /// the leftmost occurrence.
    pub fn parse_segment(&self, segment: &str) -> ParsedCandidate {
        let raw = segment.trim();
        let tokens = token_spans(raw);
        let mut best: Option<(usize, usize, usize, &str)> = None; // (len, start tok, end tok, relation)
        for (surface, rel_tokens) in &self.relations {
            let len = surface.chars().count();
            if let Some((best_len, ..)) = best {
                if len < best_len {
                    break;
                }
            }
            let n = rel_tokens.len();
            let hit = (0..tokens.len().saturating_sub(n - 1).min(tokens.len())).find(|&i| {
                tokens[i..i + n]
                    .iter()
                    .zip(rel_tokens)
                    .all(|((s, e), t)| &raw[*s..*e] == t)
            });
            if let Some(i) = hit {
                let better = match best {
                    None => true,
                    Some((_, bi, ..)) => i < bi,
                };
                if better {
                    best = Some((len, i, i + n - 1, surface));
                }
            }
        }
        let Some((_, first, last, relation)) = best else {
            return ParsedCandidate::rejected(raw, RejectReason::NoRelationFound);
        };
        let subject = raw[..tokens[first].0].trim();
        let object = raw[tokens[last].1..].trim();
        if subject.is_empty() {
            return ParsedCandidate::rejected(raw, RejectReason::EmptySubject);
        }
        if object.is_empty() {
            return ParsedCandidate::rejected(raw, RejectReason::EmptyObject);
        }
        ParsedCandidate::accepted(raw, RelationTriple::new(subject, relation, object))
    }

    /// Splits generated text on `;` and parses each non-blank segment.
    /// Repeated triples are dropped after their first occurrence.
    pub fn parse(&self, output: &str) -> Vec<ParsedCandidate> {
        let mut seen = HashSet::new();
        output
            .split(TRIPLE_SEPARATOR)
            .filter(|s| !s.trim().is_empty())
            .map(|s| self.parse_segment(s))
            .filter(|c| match &c.parsed {
                Some(t) => seen.insert(t.clone()),
                None => true,
            })
            .collect()
    }
}

fn token_spans(s: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        if c.is_whitespace() {
            if let Some(b) = start.take() {
                out.push((b, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(b) = start {
        out.push((b, s.len()));
    }
    out
}

pub fn parse_generated(output: &str, schema: &RelationSchema) -> Vec<ParsedCandidate> {
    RelationMatcher::new(schema).parse(output)
}

/// Accepted triples of a candidate list, in order.
pub fn accepted(candidates: &[ParsedCandidate]) -> Vec<RelationTriple> {
    candidates.iter().filter_map(|c| c.parsed.clone()).collect()
}

// ---------------------------------------------------------------------------
// Model-input records and augmentation
// ---------------------------------------------------------------------------

/// One line of the model-input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInput {
    pub id: String,
    pub input: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub augmented: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedItem<T> {
    /// Index of the originating item.
    pub source: usize,
    pub input: String,
    pub triples: Vec<T>,
    pub augmented: bool,
}

/// Returns the original items followed by `copies` reshuffled duplicates of
/// every item with at least two triples. A duplicate's order differs from the
/// original whenever the triples are not all identical. One seeded generator
/// drives the whole call.
pub fn augment<T: Clone + PartialEq>(
    corpus: &[(String, Vec<T>)],
    seed: u64,
    copies: usize,
) -> Vec<AugmentedItem<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<AugmentedItem<T>> = corpus
        .iter()
        .enumerate()
        .map(|(i, (input, triples))| AugmentedItem {
            source: i,
            input: input.clone(),
            triples: triples.clone(),
            augmented: false,
        })
        .collect();
    for (i, (input, triples)) in corpus.iter().enumerate() {
        if triples.len() < 2 {
            continue;
        }
        for _ in 0..copies {
            let mut shuffled = triples.clone();
            shuffled.shuffle(&mut rng);
            if shuffled == *triples {
                if let Some(j) = shuffled.iter().position(|t| *t != shuffled[0]) {
                    shuffled.swap(0, j);
                }
            }
            out.push(AugmentedItem {
                source: i,
                input: input.clone(),
                triples: shuffled,
                augmented: true,
            });
        }
    }
    out
}

/// [`augment`] over model-input records, shuffling the ` ; `-separated
/// segments of each target. Copies get ids `<id>#aug<k>`.
pub fn augment_model_inputs(items: &[ModelInput], seed: u64, copies: usize) -> Vec<ModelInput> {
    let corpus: Vec<(String, Vec<&str>)> = items
        .iter()
        .map(|m| (m.input.clone(), split_linearized(&m.target)))
        .collect();
    let mut counters = vec![0usize; items.len()];
    augment(&corpus, seed, copies)
        .into_iter()
        .map(|a| {
            let base = &items[a.source];
            if !a.augmented {
                return base.clone();
            }
            counters[a.source] += 1;
            ModelInput {
                id: format!("{}#aug{}", base.id, counters[a.source]),
                input: a.input,
                target: a.triples.join(JOINER),
                augmented: true,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(rels: &[&str]) -> RelationSchema {
        RelationSchema::new(rels.iter().copied(), None)
    }

    #[test]
    fn linearize_running_example() {
        let t = [RelationTriple::new("Peter Parker", "member_of", "Avengers")];
        assert_eq!(linearize(&t).text, "Peter Parker member_of Avengers");
        assert_eq!(linearize(&[]).text, "");
    }

    #[test]
    fn linearize_two_triples() {
        let t = [
            RelationTriple::new("Manhattan", "contains", "Washington Heights"),
            RelationTriple::new("Washington Heights", "neighborhood_of", "Manhattan"),
        ];
        assert_eq!(
            linearize(&t).text,
            "Manhattan contains Washington Heights ; Washington Heights neighborhood_of Manhattan"
        );
    }

    #[test]
    fn out_of_schema_relation_is_rejected() {
        let c = parse_generated(
            "Bill Oddie daughter Kate Hardie",
            &schema(&["child", "spouse"]),
        );
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].reject_reason, Some(RejectReason::NoRelationFound));
        assert!(c[0].parsed.is_none());
    }

    #[test]
    fn camel_case_relation_parses() {
        let c = parse_generated(
            "1634: The Bavarian crisis precededBy The Grantville Gazettes",
            &schema(&["precededBy", "author"]),
        );
        assert_eq!(
            c[0].parsed,
            Some(RelationTriple::new(
                "1634: The Bavarian crisis",
                "precededBy",
                "The Grantville Gazettes"
            ))
        );
    }

    #[test]
    fn empty_output_has_no_candidates() {
        assert!(parse_generated("", &schema(&["x"])).is_empty());
        assert!(parse_generated(" ; ;", &schema(&["x"])).is_empty());
    }

    #[test]
    fn duplicates_collapse() {
        let c = parse_generated("A member_of B ; A member_of B", &schema(&["member_of"]));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn empty_sides_are_rejected() {
        let s = schema(&["member_of"]);
        assert_eq!(
            parse_generated("member_of B", &s)[0].reject_reason,
            Some(RejectReason::EmptySubject)
        );
        assert_eq!(
            parse_generated("A member_of", &s)[0].reject_reason,
            Some(RejectReason::EmptyObject)
        );
    }

    #[test]
    fn longest_relation_wins_then_leftmost() {
        let s = schema(&["of", "member of", "part of"]);
        let c = parse_generated("Peter member of the team part of X", &s);
        // "member of" and "part of" tie on length; "member of" is leftmost
        assert_eq!(
            c[0].parsed,
            Some(RelationTriple::new(
                "Peter",
                "member of",
                "the team part of X"
            ))
        );
        let s = schema(&["member", "member_of"]);
        assert_eq!(
            parse_generated("a member_of b", &s)[0]
                .parsed
                .as_ref()
                .unwrap()
                .relation,
            "member_of"
        );
    }

    #[test]
    fn relation_must_be_whole_tokens() {
        let s = schema(&["contains"]);
        assert_eq!(
            parse_generated("a xcontains b", &s)[0].reject_reason,
            Some(RejectReason::NoRelationFound)
        );
    }

    #[test]
    fn trailing_separator_is_ignored() {
        let s = schema(&["org_alternate_names"]);
        let c = parse_generated("American Life Insurance Co org_alternate_names Alico ;", &s);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].parsed.as_ref().unwrap().object, "Alico");
    }

    #[test]
    fn single_triple_is_never_duplicated() {
        let corpus = vec![("x".to_string(), vec![1])];
        assert_eq!(augment(&corpus, 7, 1).len(), 1);
        let empty: Vec<(String, Vec<u8>)> = vec![("y".into(), vec![])];
        assert_eq!(augment(&empty, 7, 3).len(), 1);
    }

    #[test]
    fn augmented_copy_is_a_nonidentical_permutation() {
        let corpus = vec![("x".to_string(), vec!["a", "b", "c"])];
        for seed in 0..50 {
            let out = augment(&corpus, seed, 1);
            assert_eq!(out.len(), 2);
            let copy = &out[1];
            assert!(copy.augmented);
            assert_ne!(copy.triples, corpus[0].1);
            let mut sorted = copy.triples.clone();
            sorted.sort();
            assert_eq!(sorted, vec!["a", "b", "c"]);
        }
    }

    #[test]
    fn identical_triples_cannot_be_reordered() {
        let corpus = vec![("x".to_string(), vec!["a", "a"])];
        let out = augment(&corpus, 1, 1);
        assert_eq!(out[1].triples, vec!["a", "a"]);
    }

    #[test]
    fn model_inputs_get_suffixed_ids() {
        let items = vec![ModelInput {
            id: "e".into(),
            input: "in".into(),
            target: "a r b ; c r d".into(),
            augmented: false,
        }];
        let out = augment_model_inputs(&items, 3, 2);
        assert_eq!(out.len(), 3);
        assert_eq!(out[1].id, "e#aug1");
        assert_eq!(out[2].id, "e#aug2");
        assert_eq!(out[1].target, "c r d ; a r b");
        assert!(serde_json::to_string(&out[0])
            .unwrap()
            .find("augmented")
            .is_none());
        assert!(serde_json::to_string(&out[1])
            .unwrap()
            .contains("\"augmented\":true"));
    }
}
