//! Core domain types shared by every pipeline stage.
//!
//! All offsets are *character* offsets into the raw example text. Word
//! indices are never stored; [`words`] derives them on demand.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Separator used between triples in a linearized target. Arguments containing
/// it cannot be represented and are rejected at load time.
pub const TRIPLE_SEPARATOR: char = ';';

/// Which knowledge the dataset provides alongside the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    /// Entity positions and entity types are given.
    #[serde(rename = "ETRC")]
    Etrc,
    /// Entity positions are given.
    #[serde(rename = "RC")]
    Rc,
    /// Only the relation schema is given.
    #[serde(rename = "JREE")]
    Jree,
}

impl TaskKind {
    pub fn requires_positions(self) -> bool {
        matches!(self, TaskKind::Etrc | TaskKind::Rc)
    }

    pub fn requires_types(self) -> bool {
        self == TaskKind::Etrc
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Etrc => "ETRC",
            TaskKind::Rc => "RC",
            TaskKind::Jree => "JREE",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "ETRC" => Ok(TaskKind::Etrc),
            "RC" => Ok(TaskKind::Rc),
            "JREE" => Ok(TaskKind::Jree),
            other => Err(format!(
                "unknown task `{other}` (expected ETRC, RC or JREE)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl RelationTriple {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Self {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        }
    }
}

impl fmt::Display for RelationTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}>", self.subject, self.relation, self.object)
    }
}

/// One input text with its gold annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    #[serde(rename = "entities", default)]
    pub gold_entities: Vec<EntityMention>,
    #[serde(rename = "triples", default)]
    pub gold_triples: Vec<RelationTriple>,
    pub task: TaskKind,
}

impl Example {
    /// Number of characters in the text (the unit of every offset).
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Gold triples with exact duplicates removed, first occurrence kept.
    pub fn unique_triples(&self) -> Vec<RelationTriple> {
        let mut seen = HashSet::new();
        self.gold_triples
            .iter()
            .filter(|t| seen.insert(*t))
            .cloned()
            .collect()
    }
}

/// The closed relation set of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RelationSchema {
    pub relations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_relation: Option<String>,
}

impl RelationSchema {
    /// Builds a schema, dropping repeated surfaces while keeping first-seen order.
    pub fn new<I, S>(relations: I, null_relation: Option<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let relations = relations
            .into_iter()
            .map(Into::into)
            .filter(|r: &String| seen.insert(r.clone()))
            .collect();
        Self {
            relations,
            null_relation,
        }
    }

    /// Every relation used by the corpus, sorted.
    pub fn infer(corpus: &[Example]) -> Self {
        let set: BTreeSet<&str> = corpus
            .iter()
            .flat_map(|e| e.gold_triples.iter().map(|t| t.relation.as_str()))
            .collect();
        Self::new(set, None)
    }

    pub fn contains(&self, relation: &str) -> bool {
        self.relations.iter().any(|r| r == relation)
    }

    pub fn is_null(&self, relation: &str) -> bool {
        self.null_relation.as_deref() == Some(relation)
    }
}

/// Returns the substring covering characters `[start, end)`, or `None` when
/// the range is empty, reversed or out of bounds.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start >= end {
        return None;
    }
    let mut indices = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()));
    let begin = indices.nth(start)?;
    let finish = indices.nth(end - start - 1)?;
    Some(&text[begin..finish])
}

/// Converts a character offset to a byte offset (`offset == len` maps to the end).
pub fn char_to_byte(text: &str, offset: usize) -> Option<usize> {
    text.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .nth(offset)
}

/// A word produced by whitespace-plus-punctuation segmentation, with byte offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Word<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

/// Splits on whitespace and emits each punctuation character as its own word.
pub fn words(text: &str) -> Vec<Word<'_>> {
    let mut out = Vec::new();
    let mut current: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() || is_punct(c) {
            if let Some(s) = current.take() {
                out.push(Word {
                    text: &text[s..i],
                    start: s,
                    end: i,
                });
            }
            if !c.is_whitespace() {
                let e = i + c.len_utf8();
                out.push(Word {
                    text: &text[i..e],
                    start: i,
                    end: e,
                });
            }
        } else if current.is_none() {
            current = Some(i);
        }
    }
    if let Some(s) = current {
        out.push(Word {
            text: &text[s..],
            start: s,
            end: text.len(),
        });
    }
    out
}

fn is_punct(c: char) -> bool {
    (c.is_ascii_punctuation() && c != '_')
        || matches!(c, '“' | '”' | '‘' | '’' | '–' | '—' | '…' | '«' | '»')
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateId {
        id: String,
    },
    EmptyText {
        id: String,
    },
    BadSpan {
        id: String,
        entity: usize,
        reason: String,
    },
    UnknownRelation {
        id: String,
        relation: String,
    },
    EmptyArgument {
        id: String,
        triple: usize,
    },
    ArgumentNotInText {
        id: String,
        triple: usize,
        argument: String,
    },
    SeparatorInArgument {
        id: String,
        triple: usize,
    },
    MissingPositions {
        id: String,
    },
    MissingTypes {
        id: String,
    },
}

/// Findings of [`validate_corpus`]. Problems are collected, never thrown.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub count: usize,
    pub total_triples: usize,
    pub mean_triple_size: f64,
    pub per_task: BTreeMap<TaskKind, usize>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every data-model invariant over a single split.
pub fn validate_corpus(corpus: &[Example], schema: &RelationSchema) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = HashSet::new();
    for ex in corpus {
        let v = &mut report.violations;
        if !ids.insert(ex.id.as_str()) {
            v.push(Violation::DuplicateId { id: ex.id.clone() });
        }
        if ex.text.is_empty() {
            v.push(Violation::EmptyText { id: ex.id.clone() });
        }
        for (i, m) in ex.gold_entities.iter().enumerate() {
            if let Some(reason) = span_problem(&ex.text, m) {
                v.push(Violation::BadSpan {
                    id: ex.id.clone(),
                    entity: i,
                    reason,
                });
            }
        }
        for (i, t) in ex.gold_triples.iter().enumerate() {
            if !schema.contains(&t.relation) && !schema.is_null(&t.relation) {
                v.push(Violation::UnknownRelation {
                    id: ex.id.clone(),
                    relation: t.relation.clone(),
                });
            }
            if t.subject.is_empty() || t.object.is_empty() || t.relation.is_empty() {
                v.push(Violation::EmptyArgument {
                    id: ex.id.clone(),
                    triple: i,
                });
                continue;
            }
            if t.subject.contains(TRIPLE_SEPARATOR) || t.object.contains(TRIPLE_SEPARATOR) {
                v.push(Violation::SeparatorInArgument {
                    id: ex.id.clone(),
                    triple: i,
                });
            }
            for arg in [&t.subject, &t.object] {
                if !ex.text.contains(arg.as_str()) {
                    v.push(Violation::ArgumentNotInText {
                        id: ex.id.clone(),
                        triple: i,
                        argument: arg.clone(),
                    });
                }
            }
        }
        if ex.task.requires_positions()
            && !ex.gold_triples.is_empty()
            && ex.gold_entities.is_empty()
        {
            v.push(Violation::MissingPositions { id: ex.id.clone() });
        }
        if ex.task.requires_types() && ex.gold_entities.iter().any(|m| m.entity_type.is_none()) {
            v.push(Violation::MissingTypes { id: ex.id.clone() });
        }
        report.count += 1;
        report.total_triples += ex.gold_triples.len();
        *report.per_task.entry(ex.task).or_default() += 1;
    }
    if report.count > 0 {
        report.mean_triple_size = report.total_triples as f64 / report.count as f64;
    }
    report
}

/// Describes why a mention's span does not match its text, if it does not.
pub fn span_problem(text: &str, m: &EntityMention) -> Option<String> {
    if m.start >= m.end {
        return Some(format!("start {} is not before end {}", m.start, m.end));
    }
    match char_slice(text, m.start, m.end) {
        None => Some(format!("span [{}, {}) exceeds text length", m.start, m.end)),
        Some(s) if s != m.surface => Some(format!(
            "text[{}..{}] is {s:?}, not {:?}",
            m.start, m.end, m.surface
        )),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, text: &str, triples: Vec<RelationTriple>) -> Example {
        Example {
            id: id.into(),
            text: text.into(),
            gold_entities: vec![],
            gold_triples: triples,
            task: TaskKind::Jree,
        }
    }

    #[test]
    fn empty_corpus_reports_nothing() {
        let r = validate_corpus(&[], &RelationSchema::default());
        assert_eq!(r.count, 0);
        assert_eq!(r.mean_triple_size, 0.0);
        assert!(r.is_valid());
    }

    #[test]
    fn out_of_schema_relation_is_one_violation() {
        let schema = RelationSchema::new(["child", "spouse"], None);
        let corpus = vec![ex(
            "test_633",
            "Bill Oddie 's daughter is Kate Hardie .",
            vec![RelationTriple::new("Bill Oddie", "daughter", "Kate Hardie")],
        )];
        let r = validate_corpus(&corpus, &schema);
        assert_eq!(
            r.violations,
            vec![Violation::UnknownRelation {
                id: "test_633".into(),
                relation: "daughter".into()
            }]
        );
    }

    #[test]
    fn duplicate_ids_and_bad_spans_are_reported() {
        let mut a = ex("a", "Alico is here", vec![]);
        a.gold_entities.push(EntityMention {
            surface: "Alico".into(),
            start: 0,
            end: 6,
            entity_type: None,
        });
        let b = ex("a", "x", vec![]);
        let r = validate_corpus(&[a, b], &RelationSchema::default());
        assert_eq!(r.violations.len(), 2);
        assert!(matches!(r.violations[0], Violation::BadSpan { .. }));
        assert!(matches!(r.violations[1], Violation::DuplicateId { .. }));
    }

    #[test]
    fn char_slice_uses_characters() {
        let t = "Zürich is in Switzerland";
        assert_eq!(char_slice(t, 0, 6), Some("Zürich"));
        assert_eq!(char_slice(t, 13, 24), Some("Switzerland"));
        assert_eq!(char_slice(t, 13, 25), None);
        assert_eq!(char_slice(t, 3, 3), None);
        assert_eq!(char_to_byte(t, 24), Some(t.len()));
    }

    #[test]
    fn words_split_punctuation() {
        let ws: Vec<_> = words("1634: The Bavarian Crisis, (book).")
            .iter()
            .map(|w| w.text)
            .collect();
        assert_eq!(
            ws,
            ["1634", ":", "The", "Bavarian", "Crisis", ",", "(", "book", ")", "."]
        );
    }

    #[test]
    fn task_round_trips_through_json() {
        let e = ex("x", "t", vec![]);
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains("\"task\":\"JREE\""));
        assert_eq!(serde_json::from_str::<Example>(&s).unwrap(), e);
    }
}
