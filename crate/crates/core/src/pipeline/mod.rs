//! Gold-trigger and pipeline evaluation.
//!
//! Argument predictions are always scored against a [`TriggerContext`]: the
//! gold triggers for gold-trigger evaluation, or the triggers an ED stage
//! predicted for pipeline evaluation. An argument record anchored to a
//! trigger outside the context is an error.

mod store;

pub use store::{ManifestEntry, PutOutcome, StoreError, TriggerStore, TriggerStoreEntry};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{canonical_json, jsonl_lines, parse_line, IngestError, PredictionFile};
use crate::metrics::{score_ed, score_eae, Convention, EaeMatch, EvalMode, EvalReport, MetricsError, Prediction};
use crate::model::{Anchor, Corpus, EventAnnotation, Span, Task, NIL_LABEL};
use crate::standardize::{prepare_records, CandidatePolicy, ScoredRecord, StandardizeError, StandardizeOptions};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    Gold,
    Predicted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextTrigger {
    pub span: Span,
    pub event_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// Triggers EAE is conditioned on, per document, sorted by (span, type) with
/// duplicates removed.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerContext {
    pub source: ContextSource,
    triggers: BTreeMap<String, Vec<ContextTrigger>>,
}

impl TriggerContext {
    fn build(source: ContextSource, items: impl IntoIterator<Item = (String, ContextTrigger)>) -> Self {
        let mut triggers: BTreeMap<String, Vec<ContextTrigger>> = BTreeMap::new();
        for (doc, t) in items {
            triggers.entry(doc).or_default().push(t);
        }
        for list in triggers.values_mut() {
            list.sort_by(|a, b| (a.span, &a.event_type).cmp(&(b.span, &b.event_type)));
            list.dedup_by(|a, b| a.span == b.span && a.event_type == b.event_type);
        }
        TriggerContext { source, triggers }
    }

    pub fn gold(corpus: &Corpus) -> Self {
        Self::build(
            ContextSource::Gold,
            corpus.documents.iter().flat_map(|d| {
                d.events.iter().map(|e| {
                    (
                        d.id.clone(),
                        ContextTrigger { span: e.trigger, event_type: e.event_type.clone(), confidence: None },
                    )
                })
            }),
        )
    }

    pub fn predicted(id: &str, items: impl IntoIterator<Item = (String, Span, String)>) -> Self {
        Self::build(
            ContextSource::Predicted(id.to_owned()),
            items
                .into_iter()
                .map(|(doc, span, event_type)| (doc, ContextTrigger { span, event_type, confidence: None })),
        )
    }

    /// Context made of the placed, non-nil ED predictions.
    pub fn from_predictions(id: &str, predictions: &[Prediction]) -> Self {
        Self::predicted(
            id,
            predictions
                .iter()
                .filter(|p| p.label != NIL_LABEL)
                .filter_map(|p| p.span.map(|s| (p.doc_id.clone(), s, p.label.clone()))),
        )
    }

    pub fn from_trigger_file(id: &str, file: &TriggerFile) -> Self {
        Self::build(
            ContextSource::Predicted(id.to_owned()),
            file.records
                .iter()
                .flat_map(|r| r.triggers.iter().map(|t| (r.doc_id.clone(), t.clone()))),
        )
    }

    pub fn triggers(&self, doc_id: &str) -> &[ContextTrigger] {
        self.triggers.get(doc_id).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, doc_id: &str, anchor: &Anchor) -> bool {
        self.triggers(doc_id)
            .iter()
            .any(|t| t.span == anchor.trigger && t.event_type == anchor.event_type)
    }

    /// Whether some context trigger addresses gold event `ev` under the
    /// given argument-matching rule.
    pub fn reaches(&self, doc_id: &str, ev: &EventAnnotation, eae_match: EaeMatch) -> bool {
        self.triggers(doc_id).iter().any(|t| {
            t.event_type == ev.event_type && (eae_match == EaeMatch::ByEventType || t.span == ev.trigger)
        })
    }

    pub fn anchors(&self) -> impl Iterator<Item = (&str, Anchor)> + '_ {
        self.triggers.iter().flat_map(|(doc, list)| {
            list.iter().map(move |t| {
                (doc.as_str(), Anchor { trigger: t.span, event_type: t.event_type.clone() })
            })
        })
    }

    /// Same context with one trigger removed.
    pub fn without(&self, doc_id: &str, anchor: &Anchor) -> Self {
        let mut out = self.clone();
        if let Some(list) = out.triggers.get_mut(doc_id) {
            list.retain(|t| !(t.span == anchor.trigger && t.event_type == anchor.event_type));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.triggers.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerRecord {
    pub doc_id: String,
    pub triggers: Vec<ContextTrigger>,
}

/// Predicted triggers as exchanged between an ED stage and EAE evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriggerFile {
    pub records: Vec<TriggerRecord>,
}

impl TriggerFile {
    /// Parses the file without looking at any corpus; see [`Self::validate`].
    pub fn parse(reader: impl Read) -> Result<Self, IngestError> {
        let mut records = Vec::new();
        for (line, text) in jsonl_lines(reader)? {
            records.push((line, parse_line::<TriggerRecord>(line, &text)?));
        }
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (line, r) in &records {
            if let Some(&first_line) = seen.get(&r.doc_id) {
                return Err(IngestError::DuplicateRecord { line: *line, doc_id: r.doc_id.clone(), first_line });
            }
            seen.insert(r.doc_id.clone(), *line);
        }
        Ok(TriggerFile { records: records.into_iter().map(|(_, r)| r).collect() })
    }

    /// Checks document ids, span bounds and confidence ranges; `line` in
    /// errors is the record's 1-based position.
    pub fn validate(&self, corpus: &Corpus) -> Result<(), IngestError> {
        for (i, r) in self.records.iter().enumerate() {
            let line = i + 1;
            let doc = corpus.get(&r.doc_id).ok_or_else(|| IngestError::UnknownDocument {
                line,
                doc_id: r.doc_id.clone(),
            })?;
            for (j, t) in r.triggers.iter().enumerate() {
                t.span.check(doc.token_count()).map_err(|rule| IngestError::OutOfBounds {
                    line,
                    doc_id: r.doc_id.clone(),
                    field: format!("triggers[{j}].span"),
                    span: t.span,
                    rule,
                    token_count: doc.token_count(),
                })?;
                if let Some(value) = t.confidence.filter(|c| !(0.0..=1.0).contains(c)) {
                    return Err(IngestError::ConfidenceRange {
                        line,
                        doc_id: r.doc_id.clone(),
                        field: format!("triggers[{j}]"),
                        value,
                    });
                }
            }
        }
        Ok(())
    }

    /// One record per document with at least one placed, non-nil prediction,
    /// in corpus order.
    pub fn from_predictions(corpus: &Corpus, predictions: &[Prediction]) -> Self {
        let mut by_doc: HashMap<&str, BTreeSet<(Span, String)>> = HashMap::new();
        for p in predictions.iter().filter(|p| p.label != NIL_LABEL) {
            if let Some(span) = p.span {
                by_doc.entry(p.doc_id.as_str()).or_default().insert((span, p.label.clone()));
            }
        }
        let records = corpus
            .documents
            .iter()
            .filter_map(|d| {
                by_doc.remove(d.id.as_str()).map(|set| TriggerRecord {
                    doc_id: d.id.clone(),
                    triggers: set
                        .into_iter()
                        .map(|(span, event_type)| ContextTrigger { span, event_type, confidence: None })
                        .collect(),
                })
            })
            .collect();
        TriggerFile { records }
    }

    /// Triggers as ED predictions.
    pub fn predictions(&self) -> Vec<Prediction> {
        self.records
            .iter()
            .flat_map(|r| {
                r.triggers.iter().map(|t| Prediction {
                    doc_id: r.doc_id.clone(),
                    anchor: None,
                    span: Some(t.span),
                    label: t.event_type.clone(),
                })
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&canonical_json(r));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, mut writer: impl Write) -> io::Result<()> {
        writer.write_all(self.to_jsonl().as_bytes())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pipeline evaluation needs predicted triggers: pass ED predictions or a trigger file")]
    MissingTriggerSource,
    #[error("line {line}: doc {doc_id}: expected a {expected} record")]
    TaskMismatch { line: usize, doc_id: String, expected: Task },
    #[error("line {line}: doc {doc_id}: anchor {anchor} is not among the {source_name} triggers given to the model")]
    AnchorNotInContext {
        line: usize,
        doc_id: String,
        anchor: String,
        source_name: String,
    },
    #[error(transparent)]
    Standardize(#[from] StandardizeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Knobs shared by ED and EAE evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EvalOptions {
    pub policy: CandidatePolicy,
    pub standardize: bool,
    #[serde(flatten)]
    pub standardize_options: StandardizeOptions,
    pub convention: Convention,
    pub eae_match: EaeMatch,
}

/// Where pipeline evaluation takes its triggers from.
#[derive(Debug, Clone, Copy)]
pub enum TriggerInput<'a> {
    None,
    /// ED predictions, read the same way as the EAE predictions (standardized
    /// or at face value).
    Predictions(&'a PredictionFile),
    /// An already materialized trigger file, such as a store entry.
    Triggers { id: &'a str, file: &'a TriggerFile },
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub ed: Option<EvalReport>,
    pub eae: Option<EvalReport>,
    pub ed_records: Vec<ScoredRecord>,
    pub eae_records: Vec<ScoredRecord>,
    pub context: Option<TriggerContext>,
}

fn expect_task(file: &PredictionFile, task: Task) -> Result<(), PipelineError> {
    match file.records.iter().find(|r| r.task != task) {
        Some(r) => Err(PipelineError::TaskMismatch { line: r.line, doc_id: r.doc_id.clone(), expected: task }),
        None => Ok(()),
    }
}

fn flatten(records: &[ScoredRecord]) -> Vec<Prediction> {
    records
        .iter()
        .flat_map(|r| {
            r.predictions().into_iter().map(move |p| Prediction {
                doc_id: r.doc_id().to_owned(),
                anchor: r.anchor().cloned(),
                span: p.span,
                label: p.label,
            })
        })
        .collect()
}

/// Reads ED predictions and scores them.
pub fn evaluate_ed(
    corpus: &Corpus,
    predictions: &PredictionFile,
    mode: EvalMode,
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<ScoredRecord>, Vec<Prediction>), PipelineError> {
    expect_task(predictions, Task::Trigger)?;
    let records = prepare_records(predictions, corpus, &opts.policy, &opts.standardize_options, opts.standardize)?;
    let flat = flatten(&records);
    let report = score_ed(corpus, &flat, mode, opts.convention)?;
    Ok((report, records, flat))
}

/// Scores EAE predictions against an explicit context.
pub fn evaluate_eae(
    corpus: &Corpus,
    predictions: &PredictionFile,
    context: &TriggerContext,
    mode: EvalMode,
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<ScoredRecord>), PipelineError> {
    expect_task(predictions, Task::Argument)?;
    for r in &predictions.records {
        let anchor = r.anchor.as_ref().expect("argument records carry anchors");
        if !context.contains(&r.doc_id, anchor) {
            return Err(PipelineError::AnchorNotInContext {
                line: r.line,
                doc_id: r.doc_id.clone(),
                anchor: anchor.to_string(),
                source_name: match &context.source {
                    ContextSource::Gold => "gold".into(),
                    ContextSource::Predicted(id) => format!("predicted ({id})"),
                },
            });
        }
    }
    let records = prepare_records(predictions, corpus, &opts.policy, &opts.standardize_options, opts.standardize)?;
    let report = score_eae(corpus, &flatten(&records), context, mode, opts.convention, opts.eae_match)?;
    Ok((report, records))
}

/// Full evaluation run over one (variant-applied) corpus.
///
/// In gold-trigger mode the EAE context is the gold triggers, and ED inputs
/// only produce the ED report. In pipeline mode the context comes from the
/// ED inputs, which are then required.
pub fn evaluate(
    corpus: &Corpus,
    triggers: TriggerInput<'_>,
    eae: Option<&PredictionFile>,
    mode: EvalMode,
    opts: &EvalOptions,
) -> Result<Evaluation, PipelineError> {
    let (ed, ed_records, predicted) = match triggers {
        TriggerInput::None => (None, Vec::new(), None),
        TriggerInput::Predictions(file) => {
            let (report, records, flat) = evaluate_ed(corpus, file, mode, opts)?;
            let context = TriggerContext::from_predictions("ed-predictions", &flat);
            (Some(report), records, Some(context))
        }
        TriggerInput::Triggers { id, file } => {
            file.validate(corpus)?;
            let report = score_ed(corpus, &file.predictions(), mode, opts.convention)?;
            (Some(report), Vec::new(), Some(TriggerContext::from_trigger_file(id, file)))
        }
    };

    let Some(eae) = eae else {
        return Ok(Evaluation { ed, eae: None, ed_records, eae_records: Vec::new(), context: None });
    };

    let context = match mode {
        EvalMode::GoldTrigger => TriggerContext::gold(corpus),
        EvalMode::Pipeline => predicted.ok_or(PipelineError::MissingTriggerSource)?,
    };
    let (report, eae_records) = evaluate_eae(corpus, eae, &context, mode, opts)?;
    Ok(Evaluation { ed, eae: Some(report), ed_records, eae_records, context: Some(context) })
}
