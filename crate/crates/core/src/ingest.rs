//! Readers for benchmark dumps and precomputed entity-linking output.
//!
//! Every reader produces canonical [`Example`]s. Native formats are mapped as
//! follows:
//!
//! | format      | layout                                              | task |
//! |-------------|-----------------------------------------------------|------|
//! | `canonical` | JSON-Lines of [`Example`]                            | any  |
//! | `tacred`    | JSON array or JSON-Lines of token-level records      | ETRC |
//! | `semeval`   | SemEval-2010 task 8 `TRAIN_FILE.TXT` layout          | RC   |
//! | `nyt`       | `{text, triple_list}` or `{text, relation_list}`     | JREE |
//! | `webnlg`    | same as `nyt`                                        | JREE |
//! | `ace`       | document JSON-Lines with `sentences`/`relations`     | JREE |

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{
    char_slice, span_problem, EntityMention, Example, RelationTriple, TaskKind, ValidationReport,
    TRIPLE_SEPARATOR,
};

/// Where in a file a malformed record sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// 1-based line of a line-oriented file.
    Line(usize),
    /// 1-based element of a top-level JSON array.
    Record(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Record(n) => write!(f, "record {n}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{at}: field `{field}`: {message}")]
    Malformed {
        at: Location,
        field: String,
        message: String,
    },
    #[error("{0}")]
    Config(String),
}

impl IngestError {
    fn malformed(at: Location, field: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Malformed {
            at,
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn location(&self) -> Option<Location> {
        match self {
            IngestError::Malformed { at, .. } => Some(*at),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Canonical,
    Tacred,
    Semeval,
    Nyt,
    Webnlg,
    Ace,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "canonical" => CorpusFormat::Canonical,
            "tacred" => CorpusFormat::Tacred,
            "semeval" => CorpusFormat::Semeval,
            "nyt" => CorpusFormat::Nyt,
            "webnlg" => CorpusFormat::Webnlg,
            "ace" => CorpusFormat::Ace,
            other => return Err(format!("unknown corpus format `{other}`")),
        })
    }
}

/// Knobs for the native readers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReaderOptions {
    /// Keep examples whose only labels are the null relation (they get an
    /// empty triple list). Off by default so split sizes line up with the
    /// published statistics, which count positive examples only.
    pub keep_null_only: bool,
    /// Merge TACRED records sharing the same token sequence into one example.
    pub merge_same_text: bool,
    pub null_relation: String,
}

impl Default for ReaderOptions {
    fn default() -> Self {
        Self {
            keep_null_only: false,
            merge_same_text: true,
            null_relation: "no_relation".to_string(),
        }
    }
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
) -> Result<Vec<Example>, IngestError> {
    load_corpus_with(path, format, &ReaderOptions::default())
}

pub fn load_corpus_with(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    opts: &ReaderOptions,
) -> Result<Vec<Example>, IngestError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&content, format, opts)
}

/// Parses file contents already in memory.
pub fn parse_corpus(
    content: &str,
    format: CorpusFormat,
    opts: &ReaderOptions,
) -> Result<Vec<Example>, IngestError> {
    let corpus = match format {
        CorpusFormat::Canonical => parse_canonical(content)?,
        CorpusFormat::Tacred => parse_tacred(content, opts)?,
        CorpusFormat::Semeval => parse_semeval(content)?,
        CorpusFormat::Nyt | CorpusFormat::Webnlg => parse_triple_list(content, format)?,
        CorpusFormat::Ace => parse_ace(content)?,
    };
    Ok(corpus)
}

// ---------------------------------------------------------------------------
// Canonical
// ---------------------------------------------------------------------------

fn parse_canonical(content: &str) -> Result<Vec<Example>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = Location::Line(idx + 1);
        let value: Value = serde_json::from_str(line)
            .map_err(|e| IngestError::malformed(at, "<record>", e.to_string()))?;
        for field in ["id", "text", "task"] {
            if value.get(field).is_none() {
                return Err(IngestError::malformed(at, field, "missing"));
            }
        }
        let ex: Example = serde_json::from_value(value)
            .map_err(|e| IngestError::malformed(at, "<record>", e.to_string()))?;
        check_record(&ex, at)?;
        out.push(ex);
    }
    Ok(out)
}

/// Rejects records the downstream stages cannot represent.
fn check_record(ex: &Example, at: Location) -> Result<(), IngestError> {
    for (i, m) in ex.gold_entities.iter().enumerate() {
        if m.end <= m.start {
            return Err(IngestError::malformed(
                at,
                format!("entities[{i}].end"),
                format!("end {} must be greater than start {}", m.end, m.start),
            ));
        }
        if let Some(problem) = span_problem(&ex.text, m) {
            return Err(IngestError::malformed(
                at,
                format!("entities[{i}]"),
                problem,
            ));
        }
    }
    for (i, t) in ex.gold_triples.iter().enumerate() {
        for (name, value) in [
            ("subject", &t.subject),
            ("relation", &t.relation),
            ("object", &t.object),
        ] {
            if value.trim().is_empty() {
                return Err(IngestError::malformed(
                    at,
                    format!("triples[{i}].{name}"),
                    "empty",
                ));
            }
            if value.contains(TRIPLE_SEPARATOR) {
                return Err(IngestError::malformed(
                    at,
                    format!("triples[{i}].{name}"),
                    format!("contains the triple separator `{TRIPLE_SEPARATOR}`"),
                ));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Helpers for JSON dumps that may be arrays or JSON-Lines
// ---------------------------------------------------------------------------

fn json_records(content: &str) -> Result<Vec<(Location, Value)>, IngestError> {
    let trimmed = content.trim_start();
    if trimmed.starts_with('[') {
        let values: Vec<Value> = serde_json::from_str(trimmed).map_err(|e| {
            IngestError::malformed(Location::Line(e.line()), "<array>", e.to_string())
        })?;
        return Ok(values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (Location::Record(i + 1), v))
            .collect());
    }
    let mut out = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = Location::Line(idx + 1);
        let v = serde_json::from_str(line)
            .map_err(|e| IngestError::malformed(at, "<record>", e.to_string()))?;
        out.push((at, v));
    }
    Ok(out)
}

fn str_field<'a>(v: &'a Value, field: &str, at: Location) -> Result<&'a str, IngestError> {
    v.get(field)
        .ok_or_else(|| IngestError::malformed(at, field, "missing"))?
        .as_str()
        .ok_or_else(|| IngestError::malformed(at, field, "expected a string"))
}

fn usize_field(v: &Value, field: &str, at: Location) -> Result<usize, IngestError> {
    v.get(field)
        .ok_or_else(|| IngestError::malformed(at, field, "missing"))?
        .as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| IngestError::malformed(at, field, "expected a non-negative integer"))
}

/// Joins tokens with single spaces and returns each token's char span.
fn join_tokens(tokens: &[String]) -> (String, Vec<(usize, usize)>) {
    let mut text = String::new();
    let mut spans = Vec::with_capacity(tokens.len());
    let mut pos = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(' ');
            pos += 1;
        }
        let len = tok.chars().count();
        spans.push((pos, pos + len));
        text.push_str(tok);
        pos += len;
    }
    (text, spans)
}

fn token_list(v: &Value, field: &str, at: Location) -> Result<Vec<String>, IngestError> {
    let arr = v
        .get(field)
        .ok_or_else(|| IngestError::malformed(at, field, "missing"))?
        .as_array()
        .ok_or_else(|| IngestError::malformed(at, field, "expected an array of tokens"))?;
    arr.iter()
        .map(|t| {
            t.as_str()
                .map(str::to_owned)
                .ok_or_else(|| IngestError::malformed(at, field, "expected string tokens"))
        })
        .collect()
}

/// Mention covering tokens `first..=last`.
fn token_mention(
    text: &str,
    spans: &[(usize, usize)],
    first: usize,
    last: usize,
    entity_type: Option<String>,
    at: Location,
    field: &str,
) -> Result<EntityMention, IngestError> {
    if last < first {
        return Err(IngestError::malformed(
            at,
            field,
            format!("end token {last} precedes start token {first}"),
        ));
    }
    if last >= spans.len() {
        return Err(IngestError::malformed(
            at,
            field,
            format!("token {last} out of range ({} tokens)", spans.len()),
        ));
    }
    let (start, end) = (spans[first].0, spans[last].1);
    let surface = char_slice(text, start, end).unwrap_or_default().to_string();
    Ok(EntityMention {
        surface,
        start,
        end,
        entity_type,
    })
}

// ---------------------------------------------------------------------------
// TACRED
// ---------------------------------------------------------------------------

fn parse_tacred(content: &str, opts: &ReaderOptions) -> Result<Vec<Example>, IngestError> {
    let mut out: Vec<Example> = Vec::new();
    let mut by_text: HashMap<String, usize> = HashMap::new();
    for (at, rec) in json_records(content)? {
        let id = str_field(&rec, "id", at)?.to_string();
        let tokens = token_list(&rec, "token", at)?;
        let relation = str_field(&rec, "relation", at)?.to_string();
        let (text, spans) = join_tokens(&tokens);
        let subj_type = rec
            .get("subj_type")
            .and_then(Value::as_str)
            .map(str::to_owned);
        let obj_type = rec
            .get("obj_type")
            .and_then(Value::as_str)
            .map(str::to_owned);
        let subj = token_mention(
            &text,
            &spans,
            usize_field(&rec, "subj_start", at)?,
            usize_field(&rec, "subj_end", at)?,
            subj_type,
            at,
            "subj_end",
        )?;
        let obj = token_mention(
            &text,
            &spans,
            usize_field(&rec, "obj_start", at)?,
            usize_field(&rec, "obj_end", at)?,
            obj_type,
            at,
            "obj_end",
        )?;
        let triple = (relation != opts.null_relation)
            .then(|| RelationTriple::new(subj.surface.clone(), relation, obj.surface.clone()));
        if let Some(t) = &triple {
            if t.subject.contains(TRIPLE_SEPARATOR) || t.object.contains(TRIPLE_SEPARATOR) {
                return Err(IngestError::malformed(
                    at,
                    "token",
                    "entity contains the triple separator",
                ));
            }
        }

        let slot = if opts.merge_same_text {
            by_text.get(&text).copied()
        } else {
            None
        };
        let idx = match slot {
            Some(i) => i,
            None => {
                out.push(Example {
                    id,
                    text: text.clone(),
                    gold_entities: Vec::new(),
                    gold_triples: Vec::new(),
                    task: TaskKind::Etrc,
                });
                by_text.insert(text, out.len() - 1);
                out.len() - 1
            }
        };
        let ex = &mut out[idx];
        for m in [subj, obj] {
            if !ex
                .gold_entities
                .iter()
                .any(|e| e.start == m.start && e.end == m.end)
            {
                ex.gold_entities.push(m);
            }
        }
        if let Some(t) = triple {
            if !ex.gold_triples.contains(&t) {
                ex.gold_triples.push(t);
            }
        }
    }
    if !opts.keep_null_only {
        out.retain(|e| !e.gold_triples.is_empty());
    }
    for ex in &mut out {
        ex.gold_entities.sort_by_key(|m| (m.start, m.end));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// SemEval-2010 task 8
// ---------------------------------------------------------------------------

fn parse_semeval(content: &str) -> Result<Vec<Example>, IngestError> {
    let lines: Vec<&str> = content.lines().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim();
        if line.is_empty() || line.starts_with("Comment") {
            i += 1;
            continue;
        }
        let at = Location::Line(i + 1);
        let (id, quoted) = line.split_once('\t').ok_or_else(|| {
            IngestError::malformed(at, "sentence", "expected `<id>\\t\"<sentence>\"`")
        })?;
        let sentence = quoted.trim().trim_matches('"');
        let label_line = lines
            .get(i + 1)
            .map(|l| l.trim())
            .ok_or_else(|| IngestError::malformed(at, "relation", "missing relation line"))?;
        let (text, e1, e2) = strip_semeval_tags(sentence).ok_or_else(|| {
            IngestError::malformed(at, "sentence", "expected one <e1> and one <e2> tag")
        })?;
        let relation_at = Location::Line(i + 2);
        let (relation, _reversed) = semeval_relation(label_line).ok_or_else(|| {
            IngestError::malformed(
                relation_at,
                "relation",
                format!("unparseable label {label_line:?}"),
            )
        })?;
        let triple = RelationTriple::new(e1.surface.clone(), relation, e2.surface.clone());
        out.push(Example {
            id: id.trim().to_string(),
            text,
            gold_entities: vec![e1, e2],
            gold_triples: vec![triple],
            task: TaskKind::Rc,
        });
        i += 2;
    }
    Ok(out)
}

fn strip_semeval_tags(sentence: &str) -> Option<(String, EntityMention, EntityMention)> {
    let mut text = String::new();
    let mut spans: [Option<(usize, usize)>; 2] = [None, None];
    let mut open: [Option<usize>; 2] = [None, None];
    let mut rest = sentence;
    let mut pos = 0;
    while !rest.is_empty() {
        let mut matched = false;
        for (k, (o, c)) in [("<e1>", "</e1>"), ("<e2>", "</e2>")].iter().enumerate() {
            if let Some(r) = rest.strip_prefix(o) {
                open[k] = Some(pos);
                rest = r;
                matched = true;
            } else if let Some(r) = rest.strip_prefix(c) {
                spans[k] = Some((open[k]?, pos));
                rest = r;
                matched = true;
            }
        }
        if !matched {
            let c = rest.chars().next()?;
            text.push(c);
            pos += 1;
            rest = &rest[c.len_utf8()..];
        }
    }
    let mention = |(s, e): (usize, usize)| EntityMention {
        surface: char_slice(&text, s, e).unwrap_or_default().to_string(),
        start: s,
        end: e,
        entity_type: None,
    };
    let (a, b) = (spans[0]?, spans[1]?);
    if a.0 >= a.1 || b.0 >= b.1 {
        return None;
    }
    Some((text.clone(), mention(a), mention(b)))
}

/// `Cause-Effect(e2,e1)` becomes `Effect_Cause` so the triple always reads
/// e1 → e2; `Other` stays `Other`.
fn semeval_relation(label: &str) -> Option<(String, bool)> {
    let Some((name, args)) = label.split_once('(') else {
        return (!label.is_empty()).then(|| (label.replace('-', "_"), false));
    };
    let reversed = match args.trim_end_matches(')') {
        "e1,e2" => false,
        "e2,e1" => true,
        _ => return None,
    };
    let parts: Vec<&str> = name.split('-').collect();
    let name = if reversed && parts.len() == 2 {
        format!("{}_{}", parts[1], parts[0])
    } else {
        parts.join("_")
    };
    Some((name, reversed))
}

// ---------------------------------------------------------------------------
// NYT / WebNLG
// ---------------------------------------------------------------------------

/// NYT freebase paths such as `/location/location/contains` keep their last segment.
fn short_relation(r: &str) -> &str {
    if r.starts_with('/') {
        r.rsplit('/').next().unwrap_or(r)
    } else {
        r
    }
}

fn parse_triple_list(content: &str, format: CorpusFormat) -> Result<Vec<Example>, IngestError> {
    let prefix = match format {
        CorpusFormat::Nyt => "nyt",
        _ => "webnlg",
    };
    let mut out = Vec::new();
    for (n, (at, rec)) in json_records(content)?.into_iter().enumerate() {
        let text = str_field(&rec, "text", at)?.to_string();
        let id = rec
            .get("id")
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .unwrap_or_else(|| v.to_string())
            })
            .unwrap_or_else(|| format!("{prefix}-{n}"));
        let mut triples: Vec<RelationTriple> = Vec::new();
        if let Some(list) = rec.get("triple_list") {
            let list = list
                .as_array()
                .ok_or_else(|| IngestError::malformed(at, "triple_list", "expected an array"))?;
            for (i, t) in list.iter().enumerate() {
                let field = format!("triple_list[{i}]");
                let parts = t.as_array().filter(|a| a.len() == 3).ok_or_else(|| {
                    IngestError::malformed(at, &field, "expected [subject, relation, object]")
                })?;
                let s: Vec<&str> = parts.iter().filter_map(Value::as_str).collect();
                if s.len() != 3 {
                    return Err(IngestError::malformed(at, &field, "expected three strings"));
                }
                triples.push(RelationTriple::new(s[0], short_relation(s[1]), s[2]));
            }
        } else if let Some(list) = rec.get("relation_list") {
            let list = list
                .as_array()
                .ok_or_else(|| IngestError::malformed(at, "relation_list", "expected an array"))?;
            for (i, r) in list.iter().enumerate() {
                let sub = |f: &str| {
                    r.get(f).and_then(Value::as_str).ok_or_else(|| {
                        IngestError::malformed(
                            at,
                            format!("relation_list[{i}].{f}"),
                            "missing or not a string",
                        )
                    })
                };
                triples.push(RelationTriple::new(
                    sub("subject")?,
                    short_relation(sub("predicate")?),
                    sub("object")?,
                ));
            }
        } else {
            return Err(IngestError::malformed(
                at,
                "triple_list",
                "missing (nor relation_list present)",
            ));
        }
        let mut seen = HashSet::new();
        triples.retain(|t| seen.insert(t.clone()));
        let ex = Example {
            id,
            text,
            gold_entities: Vec::new(),
            gold_triples: triples,
            task: TaskKind::Jree,
        };
        check_record(&ex, at)?;
        out.push(ex);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// ACE2005 (pre-sentence-split document records)
// ---------------------------------------------------------------------------

fn parse_ace(content: &str) -> Result<Vec<Example>, IngestError> {
    let mut out = Vec::new();
    for (at, doc) in json_records(content)? {
        let doc_key = str_field(&doc, "doc_key", at)?.to_string();
        let sentences = doc
            .get("sentences")
            .and_then(Value::as_array)
            .ok_or_else(|| IngestError::malformed(at, "sentences", "missing or not an array"))?;
        let relations = doc
            .get("relations")
            .and_then(Value::as_array)
            .ok_or_else(|| IngestError::malformed(at, "relations", "missing or not an array"))?;
        if relations.len() != sentences.len() {
            return Err(IngestError::malformed(
                at,
                "relations",
                "one relation list per sentence expected",
            ));
        }
        let mut offset = 0usize;
        for (si, sent) in sentences.iter().enumerate() {
            let field = format!("sentences[{si}]");
            let tokens: Vec<String> = sent
                .as_array()
                .ok_or_else(|| IngestError::malformed(at, &field, "expected an array of tokens"))?
                .iter()
                .map(|t| t.as_str().map(str::to_owned))
                .collect::<Option<_>>()
                .ok_or_else(|| IngestError::malformed(at, &field, "expected string tokens"))?;
            let (text, spans) = join_tokens(&tokens);
            let rel_list = relations[si].as_array().cloned().unwrap_or_default();
            let mut triples = Vec::new();
            for (ri, rel) in rel_list.iter().enumerate() {
                let rfield = format!("relations[{si}][{ri}]");
                let parts = rel.as_array().filter(|a| a.len() == 5).ok_or_else(|| {
                    IngestError::malformed(at, &rfield, "expected [s1, e1, s2, e2, label]")
                })?;
                let idx = |k: usize| -> Result<usize, IngestError> {
                    let v = parts[k].as_u64().ok_or_else(|| {
                        IngestError::malformed(at, &rfield, "expected token indices")
                    })? as usize;
                    v.checked_sub(offset).ok_or_else(|| {
                        IngestError::malformed(at, &rfield, "index precedes its sentence")
                    })
                };
                let label = parts[4].as_str().ok_or_else(|| {
                    IngestError::malformed(at, &rfield, "expected a string label")
                })?;
                let subj = token_mention(&text, &spans, idx(0)?, idx(1)?, None, at, &rfield)?;
                let obj = token_mention(&text, &spans, idx(2)?, idx(3)?, None, at, &rfield)?;
                let t = RelationTriple::new(subj.surface, label, obj.surface);
                if !triples.contains(&t) {
                    triples.push(t);
                }
            }
            offset += tokens.len();
            if triples.is_empty() {
                continue;
            }
            let ex = Example {
                id: format!("{doc_key}-{si}"),
                text,
                gold_entities: Vec::new(),
                gold_triples: triples,
                task: TaskKind::Jree,
            };
            check_record(&ex, at)?;
            out.push(ex);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Entity-linking output
// ---------------------------------------------------------------------------

/// One linker hit before type resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedMention {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub kb_id: String,
    pub score: f64,
}

/// Linked mentions per example id.
pub type ElFile = BTreeMap<String, Vec<LinkedMention>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElRecord {
    pub example_id: String,
    #[serde(default)]
    pub mentions: Vec<LinkedMention>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElFilter {
    pub score_threshold: f64,
    pub top_k: usize,
}

impl Default for ElFilter {
    fn default() -> Self {
        Self {
            score_threshold: -4.5,
            top_k: 1,
        }
    }
}

/// Loads linker output, dropping low-score hits and keeping the `top_k` best
/// candidates per span. With a companion corpus, records for unknown example
/// ids and mentions whose span disagrees with the text are skipped and reported
/// in the returned warnings.
pub fn load_el(
    path: impl AsRef<Path>,
    filter: ElFilter,
    corpus: Option<&[Example]>,
) -> Result<(ElFile, Vec<String>), IngestError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_el(&content, filter, corpus)
}

pub fn parse_el(
    content: &str,
    filter: ElFilter,
    corpus: Option<&[Example]>,
) -> Result<(ElFile, Vec<String>), IngestError> {
    if !filter.score_threshold.is_finite() {
        return Err(IngestError::Config(
            "EL score threshold must be finite".into(),
        ));
    }
    if filter.top_k == 0 {
        return Err(IngestError::Config("EL top_k must be at least 1".into()));
    }
    let texts: Option<HashMap<&str, &str>> =
        corpus.map(|c| c.iter().map(|e| (e.id.as_str(), e.text.as_str())).collect());
    let mut warnings = Vec::new();
    let mut el = ElFile::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = Location::Line(idx + 1);
        let rec: ElRecord = serde_json::from_str(line)
            .map_err(|e| IngestError::malformed(at, "<record>", e.to_string()))?;
        let text = match &texts {
            Some(t) => match t.get(rec.example_id.as_str()) {
                Some(text) => Some(*text),
                None => {
                    warnings.push(format!(
                        "{at}: unknown example_id {:?}, record skipped",
                        rec.example_id
                    ));
                    continue;
                }
            },
            None => None,
        };
        for (i, m) in rec.mentions.iter().enumerate() {
            if m.end <= m.start {
                return Err(IngestError::malformed(
                    at,
                    format!("mentions[{i}].end"),
                    "end must exceed start",
                ));
            }
            if !m.score.is_finite() {
                return Err(IngestError::malformed(
                    at,
                    format!("mentions[{i}].score"),
                    "score must be finite",
                ));
            }
        }
        let entry = el.entry(rec.example_id.clone()).or_default();
        for m in rec.mentions {
            if m.score < filter.score_threshold {
                continue;
            }
            if let Some(text) = text {
                if char_slice(text, m.start, m.end) != Some(m.surface.as_str()) {
                    warnings.push(format!(
                        "{at}: mention {:?} [{}, {}) does not match the text of {}, skipped",
                        m.surface, m.start, m.end, rec.example_id
                    ));
                    continue;
                }
            }
            entry.push(m);
        }
    }
    for mentions in el.values_mut() {
        keep_top_k(mentions, filter.top_k);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((el, warnings))
}

fn keep_top_k(mentions: &mut Vec<LinkedMention>, k: usize) {
    mentions.sort_by(|a, b| {
        (a.start, a.end)
            .cmp(&(b.start, b.end))
            .then(b.score.total_cmp(&a.score))
            .then_with(|| a.kb_id.cmp(&b.kb_id))
    });
    let mut kept = Vec::with_capacity(mentions.len());
    let mut run = 0;
    let mut prev: Option<(usize, usize)> = None;
    for m in mentions.drain(..) {
        let span = (m.start, m.end);
        run = if prev == Some(span) { run + 1 } else { 1 };
        prev = Some(span);
        if run <= k {
            kept.push(m);
        }
    }
    *mentions = kept;
}

// ---------------------------------------------------------------------------
// Published split statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "dev" | "valid" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Published size and mean triple count of one benchmark split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceStats {
    pub dataset: CorpusFormat,
    pub split: Split,
    pub count: usize,
    pub mean_triple_size: f64,
}

const fn rs(
    dataset: CorpusFormat,
    split: Split,
    count: usize,
    mean_triple_size: f64,
) -> ReferenceStats {
    ReferenceStats {
        dataset,
        split,
        count,
        mean_triple_size,
    }
}

pub const REFERENCE_STATS: &[ReferenceStats] = &[
    rs(CorpusFormat::Tacred, Split::Train, 10_021, 1.30),
    rs(CorpusFormat::Tacred, Split::Val, 3_894, 1.40),
    rs(CorpusFormat::Tacred, Split::Test, 2_307, 1.44),
    rs(CorpusFormat::Semeval, Split::Train, 6_507, 1.00),
    rs(CorpusFormat::Semeval, Split::Val, 1_493, 1.00),
    rs(CorpusFormat::Semeval, Split::Test, 2_717, 1.00),
    rs(CorpusFormat::Nyt, Split::Train, 56_196, 2.01),
    rs(CorpusFormat::Nyt, Split::Val, 5_000, 2.02),
    rs(CorpusFormat::Nyt, Split::Test, 5_000, 2.03),
    rs(CorpusFormat::Webnlg, Split::Train, 5_019, 2.74),
    rs(CorpusFormat::Webnlg, Split::Val, 500, 3.11),
    rs(CorpusFormat::Webnlg, Split::Test, 703, 2.82),
    rs(CorpusFormat::Ace, Split::Train, 2_619, 1.83),
    rs(CorpusFormat::Ace, Split::Val, 648, 1.82),
    rs(CorpusFormat::Ace, Split::Test, 590, 1.95),
];

pub fn reference_stats(dataset: CorpusFormat, split: Split) -> Option<ReferenceStats> {
    REFERENCE_STATS
        .iter()
        .find(|r| r.dataset == dataset && r.split == split)
        .copied()
}

/// Outcome of comparing a loaded split against its published statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub expected_count: usize,
    pub actual_count: usize,
    pub expected_mean: f64,
    pub actual_mean: f64,
    pub matches: bool,
}

/// Sizes must match exactly and mean triple sizes must agree to two decimals.
pub fn check_against_reference(
    reference: &ReferenceStats,
    report: &ValidationReport,
) -> ReferenceCheck {
    let round2 = |x: f64| (x * 100.0).round() as i64;
    ReferenceCheck {
        expected_count: reference.count,
        actual_count: report.count,
        expected_mean: reference.mean_triple_size,
        actual_mean: report.mean_triple_size,
        matches: reference.count == report.count
            && round2(reference.mean_triple_size) == round2(report.mean_triple_size),
    }
}
