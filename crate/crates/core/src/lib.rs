//! Knowledge-grounded generative relation extraction: corpus ingestion, KB
//! type grounding, input templates, target codecs, generation backends,
//! similarity post-processing and scoring.

pub mod backend;
pub mod codec;
pub mod eval;
mod http;
pub mod ingest;
pub mod jsonl;
pub mod kb;
pub mod model;
pub mod postprocess;
pub mod template;

pub use backend::{
    BackendError, DecodingConfig, GenerationBackend, RemoteBackend, RemoteOptions, StubBackend,
};
pub use codec::{linearize, parse_generated, ModelInput, RejectReason, RelationMatcher};
pub use eval::{micro_prf, EvalReport};
pub use http::RetryPolicy;
pub use ingest::{load_corpus, CorpusFormat, ElFile, ElFilter, LinkedMention};
pub use kb::{GroundedKnowledge, KbEntry, KbSnapshot, TypeProperty};
pub use model::{EntityMention, Example, RelationSchema, RelationTriple, TaskKind};
pub use postprocess::{lev_sim, resolve_jree, resolve_rc, Prediction, SimilarityConfig};
pub use template::{build_input, AblationMode, TemplateConfig, TemplateKind};
