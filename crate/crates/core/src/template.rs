//! Knowledge-enhanced input construction.
//!
//! Two layouts are supported:
//!
//! * [`TemplateKind::Inline`] marks each given entity in place,
//!   `… [es] Alico [gr] business , …`, and needs entity positions.
//! * [`TemplateKind::Suffix`] appends one clause per grounded entity,
//!   `… . [gr] Bill Oddie is an instance of human`, and needs none.

use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{GroundedKnowledge, GroundedMention};
use crate::model::{char_to_byte, EntityMention, Example, TaskKind};

/// Whitespace-token count above which the backend will truncate the input.
pub const MAX_SOURCE_TOKENS: usize = 1024;

/// Fixed phrase joining an entity and its type in suffix clauses.
pub const INSTANCE_PHRASE: &str = "is an instance of";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("invalid template config: {0}")]
    Config(String),
    #[error("example {id}: text already contains the special token {token:?}")]
    ReservedToken { id: String, token: String },
    #[error("example {id}: entity spans [{a_start}, {a_end}) and [{b_start}, {b_end}) overlap")]
    Overlap {
        id: String,
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },
    #[error("example {id}: the inline template needs entity positions but the task is {task}")]
    NeedsPositions { id: String, task: TaskKind },
    #[error("example {id}: entity span [{start}, {end}) is outside the text")]
    BadSpan {
        id: String,
        start: usize,
        end: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Position-aware markers around each entity (`t1`).
    #[default]
    #[serde(alias = "t1")]
    Inline,
    /// Knowledge clauses appended after the text (`t2`).
    #[serde(alias = "t2")]
    Suffix,
}

impl FromStr for TemplateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "t1" | "inline" => Ok(TemplateKind::Inline),
            "t2" | "suffix" => Ok(TemplateKind::Suffix),
            other => Err(format!("unknown template `{other}` (expected t1 or t2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    #[default]
    Full,
    /// Drop grounded knowledge, keep the text (and entity markers).
    NoKg,
    /// Drop the text, keep only the appended knowledge. Suffix template only.
    NoText,
}

impl FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(AblationMode::Full),
            "no_kg" => Ok(AblationMode::NoKg),
            "no_text" => Ok(AblationMode::NoText),
            other => Err(format!("unknown ablation mode `{other}`")),
        }
    }
}

/// Where inline types come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeSource {
    #[default]
    Grounded,
    /// The dataset's own entity types.
    Dataset,
}

/// Which name a suffix clause uses for the entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuffixLabel {
    #[default]
    KbLabel,
    Surface,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateConfig {
    pub kind: TemplateKind,
    pub entity_start_token: String,
    pub grounding_token: String,
    /// Prepended with a single space, e.g. `summary:` for T5-style backends.
    pub task_prefix: Option<String>,
    pub ablation: AblationMode,
    pub type_source: TypeSource,
    pub suffix_label: SuffixLabel,
    /// Written after the grounding token for inline mentions without a type.
    /// `None` leaves such mentions with the start marker only.
    pub missing_type: Option<String>,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            kind: TemplateKind::Inline,
            entity_start_token: "[es]".into(),
            grounding_token: "[gr]".into(),
            task_prefix: None,
            ablation: AblationMode::Full,
            type_source: TypeSource::Grounded,
            suffix_label: SuffixLabel::KbLabel,
            missing_type: None,
        }
    }
}

impl TemplateConfig {
    pub fn validate(&self) -> Result<(), TemplateError> {
        let (es, gr) = (self.entity_start_token.trim(), self.grounding_token.trim());
        if es.is_empty() || gr.is_empty() {
            return Err(TemplateError::Config(
                "special tokens must be non-empty".into(),
            ));
        }
        if es == gr {
            return Err(TemplateError::Config(
                "entity and grounding tokens must differ".into(),
            ));
        }
        if self.ablation == AblationMode::NoText && self.kind != TemplateKind::Suffix {
            return Err(TemplateError::Config(
                "no_text ablation requires the suffix (t2) template".into(),
            ));
        }
        Ok(())
    }

    fn reserved_tokens(&self) -> [&str; 2] {
        [&self.entity_start_token, &self.grounding_token]
    }

    fn with_prefix(&self, body: String) -> String {
        match &self.task_prefix {
            Some(p) if !p.is_empty() => format!("{p} {body}"),
            _ => body,
        }
    }
}

fn refuse_reserved(ex: &Example, cfg: &TemplateConfig) -> Result<(), TemplateError> {
    for tok in cfg.reserved_tokens() {
        if ex.text.contains(tok) {
            return Err(TemplateError::ReservedToken {
                id: ex.id.clone(),
                token: tok.to_string(),
            });
        }
    }
    Ok(())
}

fn warn_if_long(id: &str, s: &str) {
    let n = s.split_whitespace().count();
    if n > MAX_SOURCE_TOKENS {
        log::warn!("example {id}: input has {n} whitespace tokens, more than {MAX_SOURCE_TOKENS}; the backend will truncate");
    }
}

/// Builds the input with the layout selected in `cfg.kind`.
pub fn build_input(
    ex: &Example,
    kg: &GroundedKnowledge,
    cfg: &TemplateConfig,
) -> Result<String, TemplateError> {
    match cfg.kind {
        TemplateKind::Inline => build_t1(ex, kg, cfg),
        TemplateKind::Suffix => build_t2(ex, kg, cfg),
    }
}

/// Inline template: every gold entity becomes `[es] mention [gr] type`.
pub fn build_t1(
    ex: &Example,
    kg: &GroundedKnowledge,
    cfg: &TemplateConfig,
) -> Result<String, TemplateError> {
    cfg.validate()?;
    if cfg.ablation == AblationMode::NoText {
        return Err(TemplateError::Config(
            "no_text ablation requires the suffix (t2) template".into(),
        ));
    }
    if !ex.task.requires_positions() {
        return Err(TemplateError::NeedsPositions {
            id: ex.id.clone(),
            task: ex.task,
        });
    }
    refuse_reserved(ex, cfg)?;

    let mut marked: Vec<&EntityMention> = Vec::new();
    let mut seen = HashSet::new();
    for m in &ex.gold_entities {
        if seen.insert((m.start, m.end)) {
            marked.push(m);
        }
    }
    marked.sort_by_key(|m| (m.start, m.end));
    for pair in marked.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.start < a.end {
            return Err(TemplateError::Overlap {
                id: ex.id.clone(),
                a_start: a.start,
                a_end: a.end,
                b_start: b.start,
                b_end: b.end,
            });
        }
    }

    let grounded = kg.get(&ex.id).map(Vec::as_slice).unwrap_or_default();
    let mut out = String::with_capacity(ex.text.len() + marked.len() * 24);
    let mut cursor = 0;
    for m in marked {
        let bad = || TemplateError::BadSpan {
            id: ex.id.clone(),
            start: m.start,
            end: m.end,
        };
        let (s, e) = (
            char_to_byte(&ex.text, m.start).ok_or_else(bad)?,
            char_to_byte(&ex.text, m.end).ok_or_else(bad)?,
        );
        if e <= s {
            return Err(bad());
        }
        out.push_str(&ex.text[cursor..s]);
        out.push_str(&cfg.entity_start_token);
        out.push(' ');
        out.push_str(&ex.text[s..e]);
        if cfg.ablation == AblationMode::Full {
            let ty = match cfg.type_source {
                TypeSource::Grounded => grounded
                    .iter()
                    .find(|g| g.mention.start == m.start && g.mention.end == m.end)
                    .map(|g| g.type_label.as_str()),
                TypeSource::Dataset => m.entity_type.as_deref(),
            };
            if let Some(ty) = ty.or(cfg.missing_type.as_deref()) {
                out.push(' ');
                out.push_str(&cfg.grounding_token);
                out.push(' ');
                out.push_str(ty);
            }
        }
        cursor = e;
    }
    out.push_str(&ex.text[cursor..]);
    let out = cfg.with_prefix(out);
    warn_if_long(&ex.id, &out);
    Ok(out)
}

/// Grounded mentions in text order with repeated kb ids removed.
pub fn suffix_mentions<'a>(ex: &Example, kg: &'a GroundedKnowledge) -> Vec<&'a GroundedMention> {
    let mut ms: Vec<&GroundedMention> = kg
        .get(&ex.id)
        .map(|v| v.iter().collect())
        .unwrap_or_default();
    ms.sort_by_key(|g| (g.mention.start, g.mention.end));
    let mut seen = HashSet::new();
    ms.retain(|g| seen.insert(g.mention.kb_id.as_str()));
    ms
}

/// Suffix template: the text followed by `[gr] <entity> is an instance of <type>`
/// for every grounded entity.
pub fn build_t2(
    ex: &Example,
    kg: &GroundedKnowledge,
    cfg: &TemplateConfig,
) -> Result<String, TemplateError> {
    cfg.validate()?;
    refuse_reserved(ex, cfg)?;
    if cfg.ablation == AblationMode::NoKg {
        return Ok(cfg.with_prefix(ex.text.clone()));
    }
    let clauses: Vec<String> = suffix_mentions(ex, kg)
        .into_iter()
        .map(|g| {
            let name = match cfg.suffix_label {
                SuffixLabel::KbLabel => &g.label,
                SuffixLabel::Surface => &g.mention.surface,
            };
            format!(
                "{} {} {} {}",
                cfg.grounding_token, name, INSTANCE_PHRASE, g.type_label
            )
        })
        .collect();
    let suffix = clauses.join(" ");
    let body = match cfg.ablation {
        AblationMode::NoText => suffix,
        _ if suffix.is_empty() => ex.text.clone(),
        _ => format!("{} {}", ex.text, suffix),
    };
    let out = cfg.with_prefix(body);
    warn_if_long(&ex.id, &out);
    Ok(out)
}
