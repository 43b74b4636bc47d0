//! Pipeline stages. Each reads its inputs from files and writes one artifact
//! plus a manifest, so any stage can be rerun from its predecessors' files.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use kgrex_core::backend::{
    GeneratedRecord, GenerationBackend, RemoteBackend, RemoteOptions, StubBackend,
};
use kgrex_core::codec::{augment_model_inputs, linearize, ModelInput, RelationMatcher};
use kgrex_core::eval::{self, EvalConfig, EvalReport};
use kgrex_core::ingest::{self, CorpusFormat, ReaderOptions, Split};
use kgrex_core::jsonl::read_jsonl;
use kgrex_core::kb::{
    self, GroundedKnowledge, GroundedRecord, KbClient, KbSnapshot, ResolveDiagnostics,
};
use kgrex_core::model::{validate_corpus, ValidationReport};
use kgrex_core::postprocess::{postprocess_example, Prediction};
use kgrex_core::template::build_input;
use kgrex_core::{Example, RelationSchema, RetryPolicy};

use crate::artifact::{jsonl_bytes, write_atomic, Stage};
use crate::config::{BackendKind, RunConfig};

pub struct Ctx {
    pub cfg: RunConfig,
    pool: rayon::ThreadPool,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let pool = cfg.thread_pool()?;
        Ok(Self { cfg, pool })
    }
}

pub fn read_corpus(path: &Path) -> Result<Vec<Example>> {
    ingest::load_corpus(path, CorpusFormat::Canonical)
        .with_context(|| format!("loading corpus {}", path.display()))
}

pub fn load_schema(path: Option<&Path>, corpus: &[Example]) -> Result<RelationSchema> {
    match path {
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading schema {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing schema {}", p.display()))
        }
        None => {
            log::warn!("no relation schema given; using the relations found in the corpus");
            Ok(RelationSchema::infer(corpus))
        }
    }
}

fn read_grounded(path: Option<&Path>) -> Result<GroundedKnowledge> {
    match path {
        Some(p) => {
            let records: Vec<GroundedRecord> = read_jsonl(p)?;
            Ok(kb::grounded_from_records(records))
        }
        None => Ok(GroundedKnowledge::new()),
    }
}

// ---------------------------------------------------------------------------

pub struct IngestArgs<'a> {
    pub input: &'a Path,
    pub format: CorpusFormat,
    pub schema: Option<&'a Path>,
    pub keep_null_only: bool,
    pub allow_invalid: bool,
    pub out: &'a Path,
}

pub fn ingest(ctx: &Ctx, a: &IngestArgs) -> Result<ValidationReport> {
    let opts = ReaderOptions {
        keep_null_only: a.keep_null_only,
        ..ReaderOptions::default()
    };
    let mut corpus = ingest::load_corpus_with(a.input, a.format, &opts)
        .with_context(|| format!("loading {}", a.input.display()))?;
    if let Some(task) = ctx.cfg.task {
        for ex in &mut corpus {
            ex.task = task;
        }
    }
    let schema = load_schema(a.schema, &corpus)?;
    let report = validate_corpus(&corpus, &schema);
    if !report.is_valid() && !a.allow_invalid {
        bail!(
            "{} violation(s) in {}, first: {}",
            report.violations.len(),
            a.input.display(),
            serde_json::to_string(&report.violations[0])?
        );
    }
    let mut stage = Stage::new(
        "ingest",
        serde_json::json!({
            "format": a.format, "task": ctx.cfg.task, "keep_null_only": a.keep_null_only,
        }),
    )?;
    stage.input(a.input)?.inputs(a.schema)?;
    stage.finish(a.out, &jsonl_bytes(&corpus)?)?;
    Ok(report)
}

// ---------------------------------------------------------------------------

pub struct GroundArgs<'a> {
    pub corpus: &'a Path,
    pub el: &'a Path,
    pub train_el: Option<&'a Path>,
    pub snapshot: Option<&'a Path>,
    pub kb_endpoint: Option<&'a str>,
    pub kb_cache: Option<&'a Path>,
    pub out: &'a Path,
}

pub fn ground(ctx: &Ctx, a: &GroundArgs) -> Result<ResolveDiagnostics> {
    let cfg = &ctx.cfg;
    let corpus = read_corpus(a.corpus)?;
    let (el, _) = ingest::load_el(a.el, cfg.el, Some(&corpus))
        .with_context(|| format!("loading {}", a.el.display()))?;
    let train_el = match a.train_el {
        Some(p) => {
            ingest::load_el(p, cfg.el, None)
                .with_context(|| format!("loading {}", p.display()))?
                .0
        }
        None => el.clone(),
    };
    let mut snapshot = match a.snapshot {
        Some(p) => {
            KbSnapshot::load(p).with_context(|| format!("loading snapshot {}", p.display()))?
        }
        None => KbSnapshot::default(),
    };
    if let Some(endpoint) = a.kb_endpoint {
        let cache = a
            .kb_cache
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("kb_cache.jsonl"));
        let client = KbClient::new(endpoint, cache, RetryPolicy::default())?;
        let mut wanted = kb::missing_ids(&el, &snapshot);
        wanted.extend(kb::missing_ids(&train_el, &snapshot));
        wanted.sort();
        wanted.dedup();
        let (fragment, report) = client.fetch(&wanted)?;
        log::info!(
            "kb lookup: {} cached, {} fetched, {} unknown",
            report.from_cache,
            report.fetched,
            report.unknown.len()
        );
        snapshot.merge(fragment);
    }
    let freq = kb::build_type_frequency(&train_el, &snapshot, cfg.type_property);
    let (kg, diag) = kb::resolve_types(&el, &snapshot, cfg.type_property, &freq);
    if diag.missing_from_snapshot > 0 {
        log::warn!(
            "{} linked mention(s) have no snapshot entry",
            diag.missing_from_snapshot
        );
    }
    let mut stage = Stage::new(
        "ground",
        serde_json::json!({ "el": cfg.el, "type_property": cfg.type_property }),
    )?;
    stage
        .input(a.corpus)?
        .input(a.el)?
        .inputs(a.train_el)?
        .inputs(a.snapshot)?;
    stage.finish(a.out, &jsonl_bytes(&kb::grounded_records(&kg))?)?;
    Ok(diag)
}

// ---------------------------------------------------------------------------

pub fn template(
    ctx: &Ctx,
    corpus_path: &Path,
    grounded: Option<&Path>,
    out: &Path,
) -> Result<usize> {
    let corpus = read_corpus(corpus_path)?;
    let kg = read_grounded(grounded)?;
    let tcfg = &ctx.cfg.template;
    let items: Vec<ModelInput> = ctx.pool.install(|| {
        corpus
            .par_iter()
            .map(|ex| {
                Ok(ModelInput {
                    id: ex.id.clone(),
                    input: build_input(ex, &kg, tcfg)?,
                    target: linearize(&ex.unique_triples()).text,
                    augmented: false,
                })
            })
            .collect::<Result<_>>()
    })?;
    let mut stage = Stage::new("template", tcfg)?;
    stage.input(corpus_path)?.inputs(grounded)?;
    stage.finish(out, &jsonl_bytes(&items)?)?;
    Ok(items.len())
}

pub fn augment(ctx: &Ctx, inputs: &Path, copies: usize, out: &Path) -> Result<usize> {
    let items: Vec<ModelInput> = read_jsonl(inputs)?;
    let augmented = augment_model_inputs(&items, ctx.cfg.seed, copies);
    let mut stage = Stage::new(
        "augment",
        serde_json::json!({ "seed": ctx.cfg.seed, "copies": copies }),
    )?;
    stage.input(inputs)?;
    stage.finish(out, &jsonl_bytes(&augmented)?)?;
    Ok(augmented.len() - items.len())
}

// ---------------------------------------------------------------------------

pub fn generate(ctx: &Ctx, inputs: &Path, table: Option<&Path>, out: &Path) -> Result<usize> {
    let cfg = &ctx.cfg;
    let items: Vec<ModelInput> = read_jsonl(inputs)?;
    let decoding = cfg.decoding();
    let backend: Box<dyn GenerationBackend> = match cfg.backend {
        BackendKind::Stub => {
            let table_items = match table {
                Some(p) => read_jsonl(p)?,
                None => items.clone(),
            };
            Box::new(StubBackend::oracle(&table_items))
        }
        BackendKind::Remote => {
            let endpoint = cfg
                .endpoint
                .as_deref()
                .ok_or_else(|| anyhow!("the remote backend needs --endpoint"))?;
            let opts = RemoteOptions {
                max_batch: cfg.max_batch,
                max_in_flight: cfg.max_in_flight,
                ..RemoteOptions::default()
            };
            Box::new(RemoteBackend::new(endpoint, opts)?)
        }
    };
    let texts: Vec<String> = items.iter().map(|m| m.input.clone()).collect();
    let outputs = backend.generate(&texts, &decoding)?;
    let records: Vec<GeneratedRecord> = items
        .into_iter()
        .zip(outputs)
        .map(|(m, output)| GeneratedRecord {
            id: m.id,
            input: m.input,
            output,
        })
        .collect();
    let mut stage = Stage::new(
        "generate",
        serde_json::json!({
            "backend": cfg.backend, "endpoint": cfg.endpoint, "decoding": decoding,
        }),
    )?;
    stage.input(inputs)?.inputs(table)?;
    stage.finish(out, &jsonl_bytes(&records)?)?;
    Ok(records.len())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Default, Serialize)]
pub struct PostprocessSummary {
    pub examples: usize,
    pub kept: usize,
    pub rejected: usize,
}

pub fn postprocess(
    ctx: &Ctx,
    corpus_path: &Path,
    generated: &Path,
    schema: Option<&Path>,
    out: &Path,
) -> Result<PostprocessSummary> {
    let corpus = read_corpus(corpus_path)?;
    let schema = load_schema(schema, &corpus)?;
    let matcher = RelationMatcher::new(&schema);
    let records: Vec<GeneratedRecord> = read_jsonl(generated)?;
    let by_id: HashMap<&str, &Example> = corpus.iter().map(|e| (e.id.as_str(), e)).collect();
    let sim = &ctx.cfg.sim;
    let preds: Vec<Prediction> = ctx.pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let ex = by_id
                    .get(r.id.as_str())
                    .ok_or_else(|| anyhow!("generated id {} is not in the corpus", r.id))?;
                Ok(postprocess_example(ex, &r.output, &matcher, sim))
            })
            .collect::<Result<_>>()
    })?;
    let summary = PostprocessSummary {
        examples: preds.len(),
        kept: preds.iter().map(|p| p.triples.len()).sum(),
        rejected: preds.iter().map(|p| p.rejected.len()).sum(),
    };
    let mut stage = Stage::new(
        "postprocess",
        serde_json::json!({ "sim": sim, "schema": schema }),
    )?;
    stage.input(corpus_path)?.input(generated)?;
    stage.finish(out, &jsonl_bytes(&preds)?)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------

pub fn evaluate(
    ctx: &Ctx,
    corpus_path: &Path,
    predictions: &Path,
    grounded: Option<&Path>,
    out: &Path,
    csv: Option<&Path>,
) -> Result<EvalReport> {
    let corpus = read_corpus(corpus_path)?;
    let preds: Vec<Prediction> = read_jsonl(predictions)?;
    let ecfg = EvalConfig {
        casefold: ctx.cfg.casefold,
    };
    let mut report = eval::micro_prf_with(&preds, &corpus, &ecfg)?;
    if grounded.is_some() {
        report.found_info_ratio = eval::found_info_ratio(&read_grounded(grounded)?, &corpus);
    }
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    let mut stage = Stage::new("evaluate", ecfg)?;
    stage
        .input(corpus_path)?
        .input(predictions)?
        .inputs(grounded)?;
    if let Some(csv) = csv {
        write_atomic(csv, eval::breakdown_csv(&report).as_bytes())?;
    }
    stage.finish(out, &bytes)?;
    Ok(report)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct Stats {
    pub validation: ValidationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub found_info_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ingest::ReferenceCheck>,
}

/// `reference` names a published split as `<dataset>:<split>`, e.g. `tacred:train`.
pub fn stats(
    corpus_path: &Path,
    schema: Option<&Path>,
    grounded: Option<&Path>,
    reference: Option<&str>,
) -> Result<Stats> {
    let corpus = read_corpus(corpus_path)?;
    let schema = load_schema(schema, &corpus)?;
    let validation = validate_corpus(&corpus, &schema);
    let found_info_ratio = match grounded {
        Some(_) => eval::found_info_ratio(&read_grounded(grounded)?, &corpus),
        None => None,
    };
    let reference = match reference {
        Some(r) => {
            let (ds, split) = r
                .split_once(':')
                .ok_or_else(|| anyhow!("--reference expects <dataset>:<split>, got {r}"))?;
            let ds: CorpusFormat = ds.parse().map_err(anyhow::Error::msg)?;
            let split: Split = split.parse().map_err(anyhow::Error::msg)?;
            let stats = ingest::reference_stats(ds, split)
                .ok_or_else(|| anyhow!("no published statistics for {r}"))?;
            Some(ingest::check_against_reference(&stats, &validation))
        }
        None => None,
    };
    Ok(Stats {
        validation,
        found_info_ratio,
        reference,
    })
}

// ---------------------------------------------------------------------------

/// Chains every stage over `dir`, returning the final report.
pub fn run_all(ctx: &Ctx, dir: &Path) -> Result<EvalReport> {
    let p = &ctx.cfg.paths;
    let source = p
        .corpus
        .as_deref()
        .ok_or_else(|| anyhow!("run-all needs a corpus (--corpus or paths.corpus)"))?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let f = |name: &str| dir.join(name);
    let corpus = f("corpus.jsonl");
    ingest(
        ctx,
        &IngestArgs {
            input: source,
            format: p.format.unwrap_or(CorpusFormat::Canonical),
            schema: p.schema.as_deref(),
            keep_null_only: false,
            allow_invalid: false,
            out: &corpus,
        },
    )?;
    let grounded = match &p.el {
        Some(el) => {
            ground(
                ctx,
                &GroundArgs {
                    corpus: &corpus,
                    el,
                    train_el: p.train_el.as_deref(),
                    snapshot: p.snapshot.as_deref(),
                    kb_endpoint: None,
                    kb_cache: None,
                    out: &f("grounded.jsonl"),
                },
            )?;
            Some(f("grounded.jsonl"))
        }
        None => {
            log::warn!("no EL file configured; inputs carry no knowledge");
            None
        }
    };
    let inputs = f("inputs.jsonl");
    template(ctx, &corpus, grounded.as_deref(), &inputs)?;
    if ctx.cfg.augment_copies > 0 {
        augment(
            ctx,
            &inputs,
            ctx.cfg.augment_copies,
            &f("train_inputs.jsonl"),
        )?;
    }
    generate(ctx, &inputs, None, &f("generated.jsonl"))?;
    postprocess(
        ctx,
        &corpus,
        &f("generated.jsonl"),
        p.schema.as_deref(),
        &f("predictions.jsonl"),
    )?;
    evaluate(
        ctx,
        &corpus,
        &f("predictions.jsonl"),
        grounded.as_deref(),
        &f("report.json"),
        Some(&f("breakdown.csv")),
    )
}
