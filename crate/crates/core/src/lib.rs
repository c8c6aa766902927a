//! Deterministic evaluation of event extraction systems.
//!
//! The crate covers the whole scoring path for event detection (ED) and
//! event argument extraction (EAE):
//!
//! * [`model`]: documents, spans, mentions, events and candidate sets;
//! * [`ingest`]: the JSONL corpus and prediction formats for the four
//!   output paradigms (classification, sequence labeling, span prediction,
//!   conditional generation);
//! * [`variants`]: preprocessing variants and dataset statistics;
//! * [`standardize`]: projection of any paradigm's output onto the
//!   classification candidate set;
//! * [`metrics`]: confusion counts and micro P/R/F1;
//! * [`pipeline`]: gold-trigger vs. pipeline evaluation and the predicted
//!   trigger store.
//!
//! Score arithmetic is generic over [`Scalar`], so the same code yields
//! `f64` report values and exact rational reference values.

pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
mod scalar;
pub mod standardize;
pub mod variants;

pub use scalar::Scalar;

pub use ingest::{parse_corpus, parse_predictions, IngestError, Paradigm, PredictionFile, PredictionRecord};
pub use metrics::{
    prf, score_ed, score_eae, ConfusionCounts, Convention, EaeMatch, EvalMode, EvalReport, EvalTask, Prf,
};
pub use model::{Anchor, CandidateSet, Corpus, Document, Span, Task, NIL_LABEL};
pub use pipeline::{evaluate, EvalOptions, TriggerContext, TriggerFile, TriggerInput, TriggerStore};
pub use standardize::{build_candidates, decode_bio, project, CandidatePolicy, StrayI, TriggerPolicy};
pub use variants::{apply_variant, compute_stats, DatasetStats, VariantConfig};

/// Precision, recall and F1 in double precision, as written to reports.
pub type Prf64 = Prf<f64>;
/// Single-precision scores.
pub type Prf32 = Prf<f32>;
/// Exact scores over 64-bit rationals.
pub type ExactPrf = Prf<num_rational::Rational64>;
