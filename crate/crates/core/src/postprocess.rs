//! Resolution of generated triples against the source example.
//!
//! With given entities (RC/ETRC) each generated argument is replaced by the
//! most similar gold mention, and the triple is deleted when either side falls
//! below the similarity threshold. Without them (JREE) each argument is
//! replaced by the most similar word sub-span of the text.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::codec::{linearize, ParsedCandidate, RejectReason, RelationMatcher};
use crate::model::{words, EntityMention, Example, RelationTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Lowercase and collapse whitespace runs; comparison only.
    #[default]
    CasefoldWs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    pub epsilon: f64,
    pub max_subspan_words: usize,
    pub normalization: Normalization,
    /// Optional deletion threshold for sub-span resolution; off by default.
    pub jree_threshold: Option<f64>,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.85,
            max_subspan_words: 10,
            normalization: Normalization::CasefoldWs,
            jree_threshold: None,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(format!("epsilon must be in [0, 1], got {}", self.epsilon));
        }
        if self.max_subspan_words == 0 {
            return Err("max_subspan_words must be at least 1".into());
        }
        if let Some(t) = self.jree_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(format!("jree_threshold must be in [0, 1], got {t}"));
            }
        }
        Ok(())
    }
}

pub fn normalize(s: &str, mode: Normalization) -> Vec<char> {
    match mode {
        Normalization::None => s.chars().collect(),
        Normalization::CasefoldWs => {
            let mut out = Vec::with_capacity(s.len());
            for (i, w) in s.split_whitespace().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.extend(w.chars().flat_map(char::to_lowercase));
            }
            out
        }
    }
}

/// Character edit distance (unit-cost insert, delete, substitute).
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (j, lc) in long.iter().enumerate() {
        cur[0] = j + 1;
        for (i, sc) in short.iter().enumerate() {
            let sub = prev[i] + usize::from(sc != lc);
            cur[i + 1] = sub.min(prev[i + 1] + 1).min(cur[i] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// `1 - distance / max(len)` on already-normalized strings; two empty strings score 1.
pub fn sim_chars(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// Levenshtein similarity in `[0, 1]` under the given normalization.
pub fn lev_sim_with(a: &str, b: &str, mode: Normalization) -> f64 {
    sim_chars(&normalize(a, mode), &normalize(b, mode))
}

/// Levenshtein similarity with the default casefold + whitespace normalization.
pub fn lev_sim(a: &str, b: &str) -> f64 {
    lev_sim_with(a, b, Normalization::CasefoldWs)
}

/// Triples that survived resolution, and those deleted for low similarity.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resolved {
    pub kept: Vec<RelationTriple>,
    pub deleted: Vec<RelationTriple>,
}

fn dedupe(triples: &mut Vec<RelationTriple>) {
    let mut seen = HashSet::new();
    triples.retain(|t| seen.insert(t.clone()));
}

/// Replaces both arguments of each candidate with the most similar gold
/// mention surface (ties go to the earliest mention). A candidate whose best
/// match on either side is below `epsilon` is deleted.
pub fn resolve_rc(
    candidates: &[RelationTriple],
    gold: &[EntityMention],
    cfg: &SimilarityConfig,
) -> Resolved {
    let mut mentions: Vec<&EntityMention> = gold.iter().collect();
    mentions.sort_by_key(|m| (m.start, m.end));
    let normalized: Vec<Vec<char>> = mentions
        .iter()
        .map(|m| normalize(&m.surface, cfg.normalization))
        .collect();
    let best = |generated: &str| -> Option<(f64, &str)> {
        let g = normalize(generated, cfg.normalization);
        let mut best: Option<(f64, &str)> = None;
        for (m, n) in mentions.iter().zip(&normalized) {
            let s = sim_chars(&g, n);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, m.surface.as_str()));
            }
        }
        best
    };
    let mut out = Resolved::default();
    for c in candidates {
        match (best(&c.subject), best(&c.object)) {
            (Some((ss, s)), Some((os, o))) if ss >= cfg.epsilon && os >= cfg.epsilon => {
                out.kept.push(RelationTriple::new(s, c.relation.clone(), o));
            }
            _ => out.deleted.push(c.clone()),
        }
    }
    dedupe(&mut out.kept);
    out
}

/// Word sub-spans of one text, normalized once and reused for every candidate.
pub struct SpanIndex<'a> {
    text: &'a str,
    spans: Vec<(usize, usize, usize, Vec<char>)>, // (byte start, byte end, word count, normalized)
    normalization: Normalization,
}

impl<'a> SpanIndex<'a> {
    pub fn new(text: &'a str, max_words: usize, normalization: Normalization) -> Self {
        let ws = words(text);
        let mut spans = Vec::new();
        for i in 0..ws.len() {
            for j in i..ws.len().min(i + max_words.max(1)) {
                let (s, e) = (ws[i].start, ws[j].end);
                spans.push((s, e, j - i + 1, normalize(&text[s..e], normalization)));
            }
        }
        Self {
            text,
            spans,
            normalization,
        }
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Best-matching sub-span: highest similarity, then fewest words, then
    /// leftmost. Exact substrings of the text are returned unchanged.
    pub fn best_match(&self, generated: &'a str) -> Option<(f64, &'a str)> {
        if !generated.is_empty() && self.text.contains(generated) {
            return Some((1.0, generated));
        }
        let g = normalize(generated, self.normalization);
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for &(s, e, n, ref norm) in &self.spans {
            if let Some((bs, ..)) = best {
                // edit distance is at least the length difference
                let longest = g.len().max(norm.len());
                if longest > 0
                    && 1.0 - (g.len().abs_diff(norm.len()) as f64) / (longest as f64) < bs
                {
                    continue;
                }
            }
            let sim = sim_chars(&g, norm);
            let better = match best {
                None => true,
                Some((bs, bn, bstart, _)) => sim > bs || (sim == bs && (n, s) < (bn, bstart)),
            };
            if better {
                best = Some((sim, n, s, e));
            }
        }
        best.map(|(sim, _, s, e)| (sim, &self.text[s..e]))
    }
}

/// Replaces each argument with its best-matching text sub-span.
pub fn resolve_jree(candidates: &[RelationTriple], text: &str, cfg: &SimilarityConfig) -> Resolved {
    let index = SpanIndex::new(text, cfg.max_subspan_words, cfg.normalization);
    let mut out = Resolved::default();
    for c in candidates {
        let (Some((ss, s)), Some((os, o))) =
            (index.best_match(&c.subject), index.best_match(&c.object))
        else {
            out.deleted.push(c.clone());
            continue;
        };
        if let Some(t) = cfg.jree_threshold {
            if ss < t || os < t {
                out.deleted.push(c.clone());
                continue;
            }
        }
        out.kept.push(RelationTriple::new(s, c.relation.clone(), o));
    }
    dedupe(&mut out.kept);
    out
}

/// A discarded candidate as written to the prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    pub raw: String,
    pub reason: RejectReason,
}

/// One line of the prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub triples: Vec<RelationTriple>,
    #[serde(default)]
    pub rejected: Vec<Rejected>,
}

/// Parses one generated string and resolves it against its example, choosing
/// gold-entity resolution when the task provides positions.
pub fn postprocess_example(
    ex: &Example,
    output: &str,
    matcher: &RelationMatcher,
    cfg: &SimilarityConfig,
) -> Prediction {
    let candidates: Vec<ParsedCandidate> = matcher.parse(output);
    let mut rejected: Vec<Rejected> = candidates
        .iter()
        .filter_map(|c| {
            c.reject_reason.map(|reason| Rejected {
                raw: c.raw.clone(),
                reason,
            })
        })
        .collect();
    let parsed: Vec<RelationTriple> = candidates.into_iter().filter_map(|c| c.parsed).collect();
    let resolved = if ex.task.requires_positions() {
        resolve_rc(&parsed, &ex.gold_entities, cfg)
    } else {
        resolve_jree(&parsed, &ex.text, cfg)
    };
    rejected.extend(resolved.deleted.iter().map(|t| Rejected {
        raw: linearize(std::slice::from_ref(t)).text,
        reason: RejectReason::LowSimilarity,
    }));
    Prediction {
        id: ex.id.clone(),
        triples: resolved.kept,
        rejected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(text: &str, surface: &str) -> EntityMention {
        let b = text.find(surface).unwrap();
        let start = text[..b].chars().count();
        EntityMention {
            surface: surface.into(),
            start,
            end: start + surface.chars().count(),
            entity_type: None,
        }
    }

    #[test]
    fn similarity_edges() {
        assert_eq!(lev_sim("abc", "abc"), 1.0);
        assert_eq!(lev_sim("abc", ""), 0.0);
        assert_eq!(lev_sim("", ""), 1.0);
        assert_eq!(lev_sim("The  Battery", "the battery"), 1.0);
        assert!(lev_sim_with("The Battery", "the Battery", Normalization::None) < 1.0);
    }

    #[test]
    fn similarity_of_near_names() {
        // DP by hand: one deletion over 19 characters.
        assert_eq!(
            lev_sim("Grantville Gazettes", "Grantville Gazette"),
            1.0 - 1.0 / 19.0
        );
        // one deletion over 13 characters -> 0.923, above 0.85
        assert_eq!(lev_sim("United State", "United States"), 1.0 - 1.0 / 13.0);
        assert_eq!(
            levenshtein(
                &['k', 'i', 't', 't', 'e', 'n'],
                &['s', 'i', 't', 't', 'i', 'n', 'g']
            ),
            3
        );
    }

    #[test]
    fn rc_picks_exact_gold() {
        let text =
            "AIG agreed to sell American Life Insurance Co , better known as Alico , for cash .";
        let gold = vec![m(text, "American Life Insurance Co"), m(text, "Alico")];
        let c = [RelationTriple::new(
            "American Life Insurance Co",
            "org_alternate_names",
            "Alico",
        )];
        let r = resolve_rc(&c, &gold, &SimilarityConfig::default());
        assert_eq!(r.kept, c.to_vec());
    }

    #[test]
    fn rc_replaces_close_match() {
        let text = "He lives in the United States .";
        let gold = vec![m(text, "He"), m(text, "United States")];
        let c = [RelationTriple::new(
            "He",
            "per_countries_of_residence",
            "United State",
        )];
        let r = resolve_rc(&c, &gold, &SimilarityConfig::default());
        assert_eq!(r.kept[0].object, "United States");
    }

    #[test]
    fn rc_deletes_low_similarity() {
        let text = "abcd efgh";
        let gold = vec![m(text, "abcd"), m(text, "efgh")];
        // "abxy" vs "abcd" = 0.5 < 0.85
        let c = [RelationTriple::new("abxy", "r", "efgh")];
        let r = resolve_rc(&c, &gold, &SimilarityConfig::default());
        assert!(r.kept.is_empty());
        assert_eq!(r.deleted.len(), 1);
    }

    #[test]
    fn rc_ties_go_to_earliest_mention() {
        let text = "abcx then abcy";
        let gold = vec![m(text, "abcy"), m(text, "abcx")];
        let c = [RelationTriple::new("abcz", "r", "abcz")];
        let cfg = SimilarityConfig {
            epsilon: 0.5,
            ..Default::default()
        };
        let r = resolve_rc(&c, &gold, &cfg);
        assert_eq!(r.kept[0].subject, "abcx");
    }

    #[test]
    fn rc_dedupes_after_resolution() {
        let text = "Alico and AIG";
        let gold = vec![m(text, "Alico"), m(text, "AIG")];
        let c = [
            RelationTriple::new("Alico", "r", "AIG"),
            RelationTriple::new("alico", "r", "AIG"),
        ];
        assert_eq!(
            resolve_rc(&c, &gold, &SimilarityConfig::default())
                .kept
                .len(),
            1
        );
    }

    #[test]
    fn jree_exact_substring_is_kept() {
        let text = "walks around the island -- from the Battery to Washington Heights , and on";
        let c = [RelationTriple::new(
            "the Battery",
            "contains",
            "Washington Heights",
        )];
        let r = resolve_jree(&c, text, &SimilarityConfig::default());
        assert_eq!(r.kept, c.to_vec());
    }

    #[test]
    fn jree_recovers_text_casing() {
        let text = "from the Battery to Washington Heights .";
        let c = [RelationTriple::new(
            "The Battery",
            "r",
            "washington heights",
        )];
        let r = resolve_jree(&c, text, &SimilarityConfig::default());
        assert_eq!(
            r.kept[0],
            RelationTriple::new("the Battery", "r", "Washington Heights")
        );
    }

    #[test]
    fn jree_single_word_text() {
        let c = [RelationTriple::new("Manhatan", "r", "zzz")];
        let r = resolve_jree(&c, "Manhattan", &SimilarityConfig::default());
        assert_eq!(
            r.kept[0],
            RelationTriple::new("Manhattan", "r", "Manhattan")
        );
    }

    #[test]
    fn jree_prefers_shorter_then_leftmost_on_ties() {
        // "ab" vs "ab" exact; "xy" matches "xa" and "xb" at 0.5 each -> leftmost single word
        let text = "xa ab xb";
        let idx = SpanIndex::new(text, 10, Normalization::CasefoldWs);
        assert_eq!(idx.best_match("xy").unwrap().1, "xa");
    }

    #[test]
    fn jree_threshold_is_optional() {
        let c = [RelationTriple::new("qqqq", "r", "Manhattan")];
        let cfg = SimilarityConfig {
            jree_threshold: Some(0.85),
            ..Default::default()
        };
        assert_eq!(resolve_jree(&c, "Manhattan is big", &cfg).deleted.len(), 1);
        assert_eq!(
            resolve_jree(&c, "Manhattan is big", &SimilarityConfig::default())
                .kept
                .len(),
            1
        );
    }

    #[test]
    fn config_validation() {
        assert!(SimilarityConfig::default().validate().is_ok());
        assert!(SimilarityConfig {
            epsilon: 1.2,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SimilarityConfig {
            max_subspan_words: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
