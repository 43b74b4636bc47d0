//! Knowledge-base type lookup: offline snapshots, a caching remote client,
//! and frequency-based selection of one type label per linked mention.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{with_retry, Attempt, RetryPolicy};
use crate::ingest::{ElFile, LinkedMention};
use crate::jsonl::{read_jsonl, JsonlError};

#[derive(Debug, Error)]
pub enum KbError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate kb_id {0} in snapshot")]
    DuplicateId(String),
    #[error("lookup of {kb_id} failed after {attempts} attempt(s): {message}")]
    Remote {
        kb_id: String,
        attempts: u32,
        message: String,
    },
    #[error("could not build HTTP client: {0}")]
    Client(String),
}

/// One snapshot row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub kb_id: String,
    pub label: String,
    #[serde(default)]
    pub instance_of: Vec<String>,
    #[serde(default)]
    pub subclass_of: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeProperty {
    #[default]
    InstanceOf,
    /// For nominal (non-named-entity) corpora.
    SubclassOf,
}

impl FromStr for TypeProperty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "instance_of" => Ok(TypeProperty::InstanceOf),
            "subclass_of" => Ok(TypeProperty::SubclassOf),
            other => Err(format!("unknown type property `{other}`")),
        }
    }
}

impl KbEntry {
    pub fn candidates(&self, prop: TypeProperty) -> &[String] {
        match prop {
            TypeProperty::InstanceOf => &self.instance_of,
            TypeProperty::SubclassOf => &self.subclass_of,
        }
    }
}

/// Offline KB: `kb_id → entry`, kept sorted so serialization is stable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KbSnapshot {
    entries: BTreeMap<String, KbEntry>,
}

impl KbSnapshot {
    pub fn from_entries(entries: impl IntoIterator<Item = KbEntry>) -> Result<Self, KbError> {
        let mut snap = Self::default();
        for e in entries {
            if snap.entries.contains_key(&e.kb_id) {
                return Err(KbError::DuplicateId(e.kb_id));
            }
            snap.entries.insert(e.kb_id.clone(), e);
        }
        Ok(snap)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        Self::from_entries(read_jsonl::<KbEntry>(path)?)
    }

    /// Writes the snapshot as JSON-Lines in `kb_id` order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in self.entries.values() {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KbError> {
        let path = path.as_ref();
        let io_err = |source| KbError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension("tmp");
        let file = File::create(&tmp).map_err(io_err)?;
        self.write_to(BufWriter::new(file)).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn get(&self, kb_id: &str) -> Option<&KbEntry> {
        self.entries.get(kb_id)
    }

    pub fn contains(&self, kb_id: &str) -> bool {
        self.entries.contains_key(kb_id)
    }

    /// Inserts or replaces an entry.
    pub fn insert(&mut self, entry: KbEntry) {
        self.entries.insert(entry.kb_id.clone(), entry);
    }

    pub fn merge(&mut self, other: KbSnapshot) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &KbEntry> {
        self.entries.values()
    }
}

// ---------------------------------------------------------------------------
// Type resolution
// ---------------------------------------------------------------------------

pub type TypeFrequency = BTreeMap<String, usize>;

/// Counts candidate type labels over every linked mention of the training
/// split. A mention adds one to each distinct label of its entity; entities
/// missing from the snapshot contribute nothing.
pub fn build_type_frequency(
    train_el: &ElFile,
    snapshot: &KbSnapshot,
    prop: TypeProperty,
) -> TypeFrequency {
    let mut freq = TypeFrequency::new();
    for m in train_el.values().flatten() {
        let Some(entry) = snapshot.get(&m.kb_id) else {
            continue;
        };
        let labels: BTreeSet<&String> = entry.candidates(prop).iter().collect();
        for label in labels {
            *freq.entry(label.clone()).or_default() += 1;
        }
    }
    freq
}

/// Highest training frequency wins; ties and all-zero candidates fall back to
/// lexicographic order of the label.
pub fn select_type<'a>(candidates: &'a [String], freq: &TypeFrequency) -> Option<&'a String> {
    candidates.iter().min_by(|a, b| {
        let fa = freq.get(*a).copied().unwrap_or(0);
        let fb = freq.get(*b).copied().unwrap_or(0);
        fb.cmp(&fa).then_with(|| a.cmp(b))
    })
}

/// A linked mention with its resolved KB label and type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedMention {
    #[serde(flatten)]
    pub mention: LinkedMention,
    /// KB label of the linked entity.
    pub label: String,
    pub type_label: String,
}

/// Grounded facts per example id.
pub type GroundedKnowledge = BTreeMap<String, Vec<GroundedMention>>;

/// Serialized form of one [`GroundedKnowledge`] entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedRecord {
    pub example_id: String,
    pub mentions: Vec<GroundedMention>,
}

pub fn grounded_records(kg: &GroundedKnowledge) -> Vec<GroundedRecord> {
    kg.iter()
        .map(|(id, ms)| GroundedRecord {
            example_id: id.clone(),
            mentions: ms.clone(),
        })
        .collect()
}

pub fn grounded_from_records(records: Vec<GroundedRecord>) -> GroundedKnowledge {
    let mut kg = GroundedKnowledge::new();
    for r in records {
        kg.entry(r.example_id).or_default().extend(r.mentions);
    }
    kg
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveDiagnostics {
    pub resolved: usize,
    /// Mentions whose kb_id is not in the snapshot.
    pub missing_from_snapshot: usize,
    pub missing_kb_ids: BTreeSet<String>,
    /// Mentions whose entity has no candidate type for the property.
    pub untyped: usize,
}

/// Gives each linked mention exactly one type label (see [`select_type`]).
/// Mentions that cannot be typed are dropped and counted in the diagnostics.
pub fn resolve_types(
    el: &ElFile,
    snapshot: &KbSnapshot,
    prop: TypeProperty,
    freq: &TypeFrequency,
) -> (GroundedKnowledge, ResolveDiagnostics) {
    let mut kg = GroundedKnowledge::new();
    let mut diag = ResolveDiagnostics::default();
    for (id, mentions) in el {
        let mut grounded = Vec::new();
        for m in mentions {
            let Some(entry) = snapshot.get(&m.kb_id) else {
                diag.missing_from_snapshot += 1;
                diag.missing_kb_ids.insert(m.kb_id.clone());
                continue;
            };
            match select_type(entry.candidates(prop), freq) {
                Some(t) => {
                    diag.resolved += 1;
                    grounded.push(GroundedMention {
                        mention: m.clone(),
                        label: entry.label.clone(),
                        type_label: t.clone(),
                    });
                }
                None => diag.untyped += 1,
            }
        }
        if !grounded.is_empty() {
            kg.insert(id.clone(), grounded);
        }
    }
    (kg, diag)
}

// ---------------------------------------------------------------------------
// Remote lookup with an on-disk cache
// ---------------------------------------------------------------------------

/// What a [`KbClient::fetch`] call did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchReport {
    pub from_cache: usize,
    pub fetched: usize,
    /// Ids the endpoint does not know (HTTP 404).
    pub unknown: Vec<String>,
}

/// Looks up entities at `GET <endpoint>/entity/<kb_id>`, which answers with a
/// [`KbEntry`] JSON object. Every result lands in a snapshot-format cache file,
/// so a repeated run makes no network calls.
pub struct KbClient {
    http: reqwest::blocking::Client,
    endpoint: String,
    cache_path: PathBuf,
    retry: RetryPolicy,
    cache_lock: Mutex<()>,
}

impl KbClient {
    pub fn new(
        endpoint: impl Into<String>,
        cache_path: impl Into<PathBuf>,
        retry: RetryPolicy,
    ) -> Result<Self, KbError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(retry.timeout)
            .build()
            .map_err(|e| KbError::Client(e.to_string()))?;
        Ok(Self {
            http,
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            cache_path: cache_path.into(),
            retry,
            cache_lock: Mutex::new(()),
        })
    }

    fn load_cache(&self) -> Result<KbSnapshot, KbError> {
        if self.cache_path.exists() {
            KbSnapshot::load(&self.cache_path)
        } else {
            Ok(KbSnapshot::default())
        }
    }

    /// Returns the snapshot fragment for `kb_ids`. Cached ids are served
    /// locally; the rest are fetched one by one. Results obtained before a
    /// failure are still written to the cache.
    pub fn fetch(&self, kb_ids: &[String]) -> Result<(KbSnapshot, FetchReport), KbError> {
        let _guard = self.cache_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut cache = self.load_cache()?;
        let mut report = FetchReport::default();
        let mut fragment = KbSnapshot::default();
        let wanted: BTreeSet<&String> = kb_ids.iter().collect();
        let mut failure = None;
        let mut dirty = false;
        for id in wanted {
            if let Some(e) = cache.get(id) {
                report.from_cache += 1;
                fragment.insert(e.clone());
                continue;
            }
            match self.lookup(id) {
                Ok(Some(entry)) => {
                    report.fetched += 1;
                    cache.insert(entry.clone());
                    fragment.insert(entry);
                    dirty = true;
                }
                Ok(None) => {
                    log::info!("kb id {id} unknown to {}", self.endpoint);
                    report.unknown.push(id.clone());
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        if dirty {
            if let Some(dir) = self
                .cache_path
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
            {
                fs::create_dir_all(dir).map_err(|source| KbError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            cache.save(&self.cache_path)?;
        }
        match failure {
            Some(e) => Err(e),
            None => Ok((fragment, report)),
        }
    }

    fn lookup(&self, kb_id: &str) -> Result<Option<KbEntry>, KbError> {
        let url = format!("{}/entity/{}", self.endpoint, kb_id);
        let result = with_retry(&self.retry, || {
            let resp = self
                .http
                .get(&url)
                .send()
                .map_err(|e| Attempt::Transient(e.to_string()))?;
            let status = resp.status();
            if status == reqwest::StatusCode::NOT_FOUND {
                return Ok(None);
            }
            if status.is_server_error() {
                return Err(Attempt::Transient(format!("HTTP {status}")));
            }
            if !status.is_success() {
                return Err(Attempt::Fatal(format!("HTTP {status}")));
            }
            let body = resp.text().map_err(|e| Attempt::Transient(e.to_string()))?;
            let entry: KbEntry = serde_json::from_str(&body)
                .map_err(|e| Attempt::Fatal(format!("bad entity JSON: {e}")))?;
            Ok(Some(entry))
        });
        result.map_err(|(message, attempts)| KbError::Remote {
            kb_id: kb_id.to_string(),
            attempts,
            message,
        })
    }
}

/// Distinct kb ids referenced by an EL file that the snapshot lacks.
pub fn missing_ids(el: &ElFile, snapshot: &KbSnapshot) -> Vec<String> {
    let ids: BTreeSet<&String> = el.values().flatten().map(|m| &m.kb_id).collect();
    ids.into_iter()
        .filter(|id| !snapshot.contains(id))
        .cloned()
        .collect()
}

/// Occurrence counts per kb id, for diagnostics.
pub fn kb_id_counts(el: &ElFile) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for m in el.values().flatten() {
        *counts.entry(m.kb_id.as_str()).or_default() += 1;
    }
    counts
}
