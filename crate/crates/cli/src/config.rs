//! Run configuration: a JSON file mirroring the command-line flags, with
//! flags taking precedence.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use kgrex_core::backend::{DecodingConfig, Strategy, TrainJob};
use kgrex_core::ingest::{CorpusFormat, ElFilter};
use kgrex_core::kb::TypeProperty;
use kgrex_core::postprocess::SimilarityConfig;
use kgrex_core::template::{AblationMode, TemplateConfig, TemplateKind};
use kgrex_core::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    pub el: Option<PathBuf>,
    /// EL output of the training split, used for type frequencies.
    pub train_el: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the task recorded in the corpus.
    pub task: Option<TaskKind>,
    pub template: TemplateConfig,
    pub decoding: DecodingConfig,
    pub sim: SimilarityConfig,
    pub el: ElFilter,
    pub type_property: TypeProperty,
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub max_batch: usize,
    pub max_in_flight: usize,
    pub augment_copies: usize,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub casefold: bool,
    /// Forwarded verbatim to the training endpoint.
    pub train: TrainJob,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: None,
            template: TemplateConfig::default(),
            decoding: DecodingConfig::default(),
            sim: SimilarityConfig::default(),
            el: ElFilter::default(),
            type_property: TypeProperty::default(),
            backend: BackendKind::default(),
            endpoint: None,
            max_batch: 32,
            max_in_flight: 4,
            augment_copies: 1,
            seed: 42,
            jobs: None,
            casefold: false,
            train: TrainJob::default(),
            paths: Paths::default(),
        }
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub task: Option<TaskKind>,
    /// t1 (inline markers) or t2 (knowledge suffix)
    #[arg(long, global = true)]
    pub template: Option<TemplateKind>,
    /// full, no_kg or no_text
    #[arg(long, global = true)]
    pub ablation: Option<AblationMode>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub top_k: Option<u32>,
    #[arg(long, global = true)]
    pub top_p: Option<f64>,
    /// Use greedy decoding instead of top-k + nucleus sampling
    #[arg(long, global = true)]
    pub greedy: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Worker threads for per-example work
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn resolve(g: &GlobalOpts) -> Result<Self> {
        let mut cfg = match &g.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(g);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, g: &GlobalOpts) {
        if let Some(t) = g.task {
            self.task = Some(t);
        }
        if let Some(t) = g.template {
            self.template.kind = t;
        }
        if let Some(a) = g.ablation {
            self.template.ablation = a;
        }
        if let Some(e) = g.epsilon {
            self.sim.epsilon = e;
        }
        if let Some(k) = g.top_k {
            self.decoding.top_k = k;
        }
        if let Some(p) = g.top_p {
            self.decoding.top_p = p;
        }
        if g.greedy {
            self.decoding.strategy = Strategy::Greedy;
        }
        if let Some(s) = g.seed {
            self.seed = s;
        }
        if let Some(b) = g.backend {
            self.backend = b;
        }
        if let Some(e) = &g.endpoint {
            self.endpoint = Some(e.clone());
        }
        if let Some(j) = g.jobs {
            self.jobs = Some(j);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.template.validate()?;
        if let Some(task) = self.task {
            if self.template.kind == TemplateKind::Inline && !task.requires_positions() {
                bail!("template t1 needs entity positions, which {task} examples do not have; use --template t2");
            }
        }
        self.decoding.validate()?;
        self.sim.validate().map_err(anyhow::Error::msg)?;
        if self.backend == BackendKind::Remote && self.endpoint.is_none() {
            bail!("the remote backend needs --endpoint");
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        Ok(())
    }

    /// Decoding settings with the run seed filled in.
    pub fn decoding(&self) -> DecodingConfig {
        DecodingConfig {
            seed: self.decoding.seed.or(Some(self.seed)),
            ..self.decoding
        }
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            b = b.num_threads(j);
        }
        Ok(b.build()?)
    }
}
