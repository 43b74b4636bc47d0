mod artifact;
mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use kgrex_core::backend::{RemoteBackend, RemoteOptions, TrainJob};
use kgrex_core::eval::{self, EvalReport};
use kgrex_core::ingest::CorpusFormat;

use config::{GlobalOpts, RunConfig};
use stages::Ctx;

#[derive(Parser)]
#[command(
    name = "kgrex",
    version,
    about = "Knowledge-grounded generative relation extraction pipeline"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert a benchmark dump to the canonical corpus format and validate it
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "canonical")]
        format: CorpusFormat,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Keep examples whose only label is the null relation (TACRED)
        #[arg(long)]
        keep_null_only: bool,
        /// Write the corpus even when validation finds violations
        #[arg(long)]
        allow_invalid: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resolve linked mentions to KB type labels
    Ground {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        el: PathBuf,
        /// EL output of the training split for type frequencies (defaults to --el)
        #[arg(long)]
        train_el: Option<PathBuf>,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Fetch ids missing from the snapshot from this KB service
        #[arg(long)]
        kb_endpoint: Option<String>,
        #[arg(long)]
        kb_cache: Option<PathBuf>,
        #[arg(long)]
        el_threshold: Option<f64>,
        #[arg(long)]
        el_top_k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build model inputs and linearized targets
    Template {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        grounded: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add triple-order shuffled copies of multi-triple training inputs
    Augment {
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        copies: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a generation backend over model inputs
    Generate {
        #[arg(long)]
        inputs: PathBuf,
        /// Lookup table for the stub backend (defaults to --inputs)
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse generated text into schema triples and align entity surfaces
    Postprocess {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold triples
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Grounded knowledge, for the found-info ratio
        #[arg(long)]
        grounded: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        casefold: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus statistics and validation
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        grounded: Option<PathBuf>,
        /// Compare with published split statistics, e.g. webnlg:test
        #[arg(long)]
        reference: Option<String>,
    },
    /// Mean and sample standard deviation over several report files
    Combine {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Run every stage into one directory
    RunAll {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        format: Option<CorpusFormat>,
        #[arg(long)]
        el: Option<PathBuf>,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Submit a fine-tuning job to the inference service
    Train {
        #[arg(long)]
        train_file: PathBuf,
        #[arg(long)]
        val_file: PathBuf,
    },
    /// Query a fine-tuning job
    TrainStatus { job_id: String },
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn print_report(r: &EvalReport) {
    print!("{}", eval::render_table(r));
}

fn remote(cfg: &RunConfig) -> Result<RemoteBackend> {
    let endpoint = cfg
        .endpoint
        .as_deref()
        .ok_or_else(|| anyhow!("--endpoint is required"))?;
    Ok(RemoteBackend::new(
        endpoint,
        RemoteOptions {
            max_batch: cfg.max_batch,
            max_in_flight: cfg.max_in_flight,
            ..Default::default()
        },
    )?)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::resolve(&cli.global)?;
    match cli.cmd {
        Cmd::Ingest {
            input,
            format,
            schema,
            keep_null_only,
            allow_invalid,
            out,
        } => {
            let ctx = Ctx::new(cfg)?;
            let report = stages::ingest(
                &ctx,
                &stages::IngestArgs {
                    input: &input,
                    format,
                    schema: schema.as_deref(),
                    keep_null_only,
                    allow_invalid,
                    out: &out,
                },
            )?;
            print_json(&report)?;
        }
        Cmd::Ground {
            corpus,
            el,
            train_el,
            snapshot,
            kb_endpoint,
            kb_cache,
            el_threshold,
            el_top_k,
            out,
        } => {
            if let Some(t) = el_threshold {
                cfg.el.score_threshold = t;
            }
            if let Some(k) = el_top_k {
                cfg.el.top_k = k;
            }
            let ctx = Ctx::new(cfg)?;
            let diag = stages::ground(
                &ctx,
                &stages::GroundArgs {
                    corpus: &corpus,
                    el: &el,
                    train_el: train_el.as_deref(),
                    snapshot: snapshot.as_deref(),
                    kb_endpoint: kb_endpoint.as_deref(),
                    kb_cache: kb_cache.as_deref(),
                    out: &out,
                },
            )?;
            print_json(&diag)?;
        }
        Cmd::Template {
            corpus,
            grounded,
            out,
        } => {
            let n = stages::template(&Ctx::new(cfg)?, &corpus, grounded.as_deref(), &out)?;
            eprintln!("{n} inputs written to {}", out.display());
        }
        Cmd::Augment {
            inputs,
            copies,
            out,
        } => {
            let copies = copies.unwrap_or(cfg.augment_copies);
            let n = stages::augment(&Ctx::new(cfg)?, &inputs, copies, &out)?;
            eprintln!("{n} augmented copies added");
        }
        Cmd::Generate { inputs, table, out } => {
            let n = stages::generate(&Ctx::new(cfg)?, &inputs, table.as_deref(), &out)?;
            eprintln!("{n} outputs written to {}", out.display());
        }
        Cmd::Postprocess {
            corpus,
            generated,
            schema,
            out,
        } => {
            let s = stages::postprocess(
                &Ctx::new(cfg)?,
                &corpus,
                &generated,
                schema.as_deref(),
                &out,
            )?;
            print_json(&s)?;
        }
        Cmd::Evaluate {
            corpus,
            predictions,
            grounded,
            csv,
            casefold,
            out,
        } => {
            cfg.casefold |= casefold;
            let r = stages::evaluate(
                &Ctx::new(cfg)?,
                &corpus,
                &predictions,
                grounded.as_deref(),
                &out,
                csv.as_deref(),
            )?;
            print_report(&r);
        }
        Cmd::Stats {
            corpus,
            schema,
            grounded,
            reference,
        } => {
            print_json(&stages::stats(
                &corpus,
                schema.as_deref(),
                grounded.as_deref(),
                reference.as_deref(),
            )?)?;
        }
        Cmd::Combine { reports } => {
            let parsed = reports
                .iter()
                .map(|p| {
                    let text = std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
                })
                .collect::<Result<Vec<EvalReport>>>()?;
            print_json(&eval::combine(&parsed))?;
        }
        Cmd::RunAll {
            corpus,
            format,
            el,
            snapshot,
            schema,
            out,
        } => {
            let p = &mut cfg.paths;
            p.corpus = corpus.or(p.corpus.take());
            p.format = format.or(p.format);
            p.el = el.or(p.el.take());
            p.snapshot = snapshot.or(p.snapshot.take());
            p.schema = schema.or(p.schema.take());
            p.out = out.or(p.out.take());
            let dir = p
                .out
                .clone()
                .unwrap_or_else(|| Path::new("kgrex-out").to_path_buf());
            let r = stages::run_all(&Ctx::new(cfg)?, &dir)?;
            print_report(&r);
        }
        Cmd::Train {
            train_file,
            val_file,
        } => {
            let job = TrainJob {
                train_file: train_file.display().to_string(),
                val_file: val_file.display().to_string(),
                seed: cfg.seed,
                ..cfg.train.clone()
            };
            let submitted = remote(&cfg)?.submit_training(&job)?;
            println!("{}", submitted.job_id);
        }
        Cmd::TrainStatus { job_id } => {
            print_json(&remote(&cfg)?.training_status(&job_id)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
