//! Output-space standardization.
//!
//! Predictions from every paradigm are projected onto the classification
//! candidate set of their `(document, anchor)`:
//!
//! * classification assignments pass through unchanged;
//! * sequence-labeling tags are decoded to spans, span predictions are used
//!   as given, and generated mentions are first positioned in the document by
//!   order of appearance;
//! * a span lands on a candidate only if the boundaries are identical,
//!   otherwise it is discarded as `overlap_mismatch`;
//! * several predictions on one candidate are reduced to one: highest
//!   confidence wins, ties and unscored predictions go to the first one
//!   produced.
//!
//! Nothing is dropped silently: every discarded prediction is kept with a
//! machine-readable reason.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{canonical_json, Assignment, BioTag, GeneratedItem, Payload, PredictionFile, PredictionRecord};
use crate::model::{Anchor, Candidate, CandidateSet, Corpus, Document, Span, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TriggerPolicy {
    /// One single-token candidate per token.
    #[default]
    EveryToken,
    /// Every span of at most `k` tokens inside one sentence.
    SpansUpTo(NonZeroUsize),
}

impl fmt::Display for TriggerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TriggerPolicy::EveryToken => f.write_str("every_token"),
            TriggerPolicy::SpansUpTo(k) => write!(f, "every_span_up_to:{k}"),
        }
    }
}

impl FromStr for TriggerPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        if norm == "every_token" {
            return Ok(TriggerPolicy::EveryToken);
        }
        let k = norm
            .strip_prefix("every_span_up_to:")
            .or_else(|| norm.strip_prefix("spans:"))
            .ok_or_else(|| format!("unknown trigger policy {s:?} (expected every_token or every_span_up_to:K)"))?;
        k.parse::<NonZeroUsize>()
            .map(TriggerPolicy::SpansUpTo)
            .map_err(|_| format!("span length bound must be an integer >= 1, got {k:?}"))
    }
}

impl Serialize for TriggerPolicy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// How candidates are enumerated. Argument candidates are always the entity
/// mentions of the (variant-filtered) document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct CandidatePolicy {
    pub trigger: TriggerPolicy,
}

pub fn trigger_candidate_id(span: Span) -> String {
    format!("t{}-{}", span.start, span.end)
}

/// Trigger candidates when `anchor` is `None`, argument candidates for that
/// anchor otherwise.
pub fn build_candidates(doc: &Document, anchor: Option<&Anchor>, policy: &CandidatePolicy) -> CandidateSet {
    let candidates = match anchor {
        Some(_) => doc
            .entities
            .iter()
            .map(|m| Candidate { id: m.id.clone(), span: m.span })
            .collect(),
        None => {
            let spans: Vec<Span> = match policy.trigger {
                TriggerPolicy::EveryToken => (0..doc.token_count()).map(|i| Span::new(i, i + 1)).collect(),
                TriggerPolicy::SpansUpTo(k) => doc
                    .sentences
                    .iter()
                    .flat_map(|s| {
                        (1..=k.get()).flat_map(move |len| {
                            (s.start..s.end.saturating_sub(len - 1)).map(move |i| Span::new(i, i + len))
                        })
                    })
                    .collect(),
            };
            spans
                .into_iter()
                .map(|span| Candidate { id: trigger_candidate_id(span), span })
                .collect()
        }
    };
    let task = if anchor.is_some() { Task::Argument } else { Task::Trigger };
    CandidateSet::new(doc.id.clone(), task, anchor.cloned(), candidates)
}

/// Handling of an `I-X` tag that does not continue a span labelled `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrayI {
    /// Treat it as `B-X`.
    #[default]
    OpenSpan,
    /// Drop the tag; following `I-X` tags are dropped with it.
    Discard,
}

impl FromStr for StrayI {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "open_span" => Ok(StrayI::OpenSpan),
            "discard" => Ok(StrayI::Discard),
            _ => Err(format!("unknown stray-I handling {s:?} (expected open_span or discard)")),
        }
    }
}

pub fn decode_bio(tags: &[BioTag], stray_i: StrayI) -> Vec<(Span, String)> {
    let mut out = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    let close = |open: &mut Option<(usize, &str)>, end: usize, out: &mut Vec<(Span, String)>| {
        if let Some((start, label)) = open.take() {
            out.push((Span::new(start, end), label.to_owned()));
        }
    };
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BioTag::Outside => close(&mut open, i, &mut out),
            BioTag::Begin(label) => {
                close(&mut open, i, &mut out);
                open = Some((i, label));
            }
            BioTag::Inside(label) => {
                if matches!(open, Some((_, current)) if current == label) {
                    continue;
                }
                close(&mut open, i, &mut out);
                if stray_i == StrayI::OpenSpan {
                    open = Some((i, label));
                }
            }
        }
    }
    close(&mut open, tags.len(), &mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// The span does not coincide with any candidate.
    OverlapMismatch,
    /// Another prediction on the same candidate has a higher confidence.
    DuplicateLowerConfidence,
    /// Another prediction on the same candidate, with equal or no
    /// confidence, came first.
    DuplicateLaterArrival,
    /// A generated mention with no (remaining) occurrence in the document.
    UnplaceableMention,
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscardReason::OverlapMismatch => "overlap_mismatch",
            DiscardReason::DuplicateLowerConfidence => "duplicate_lower_confidence",
            DiscardReason::DuplicateLaterArrival => "duplicate_later_arrival",
            DiscardReason::UnplaceableMention => "unplaceable_mention",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Native,
    Projected,
    ResolvedDuplicate,
    Positioned,
}

/// A prediction as it appeared in its source record, for the discard ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OriginalPrediction {
    /// Position among the record's predictions (decoded spans for tags).
    pub arrival: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mention: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discard {
    pub reason: DiscardReason,
    pub original: OriginalPrediction,
}

/// A prediction that landed on a candidate, before duplicate resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPrediction {
    pub candidate_id: String,
    pub label: String,
    pub confidence: Option<f64>,
    pub arrival: usize,
    pub original: OriginalPrediction,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Resolution {
    /// Winner per candidate, and whether it beat at least one rival.
    pub winners: BTreeMap<String, (MatchedPrediction, bool)>,
    pub discarded: Vec<Discard>,
}

fn beats(a: &MatchedPrediction, b: &MatchedPrediction) -> bool {
    let conf = |m: &MatchedPrediction| m.confidence.unwrap_or(f64::NEG_INFINITY);
    match conf(a).partial_cmp(&conf(b)) {
        Some(std::cmp::Ordering::Greater) => true,
        Some(std::cmp::Ordering::Less) => false,
        _ => a.arrival < b.arrival,
    }
}

/// Keeps one prediction per candidate: maximum confidence, ties broken by
/// earliest arrival; without confidences, earliest arrival.
pub fn resolve_duplicates(matched: Vec<MatchedPrediction>) -> Resolution {
    let mut groups: BTreeMap<String, Vec<MatchedPrediction>> = BTreeMap::new();
    for m in matched {
        groups.entry(m.candidate_id.clone()).or_default().push(m);
    }
    let mut resolution = Resolution::default();
    for (id, group) in groups {
        let contested = group.len() > 1;
        let mut iter = group.into_iter();
        let mut best = iter.next().expect("groups are non-empty");
        let mut losers = Vec::new();
        for m in iter {
            if beats(&m, &best) {
                losers.push(std::mem::replace(&mut best, m));
            } else {
                losers.push(m);
            }
        }
        for loser in losers {
            let reason = match (best.confidence, loser.confidence) {
                (Some(w), Some(l)) if w > l => DiscardReason::DuplicateLowerConfidence,
                (Some(_), None) => DiscardReason::DuplicateLowerConfidence,
                _ => DiscardReason::DuplicateLaterArrival,
            };
            resolution.discarded.push(Discard { reason, original: loser.original });
        }
        resolution.winners.insert(id, (best, contested));
    }
    resolution.discarded.sort_by_key(|d| d.original.arrival);
    resolution
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionedItem {
    pub span: Span,
    pub label: String,
    pub confidence: Option<f64>,
    pub arrival: usize,
}

/// Places generated mentions in the document: the k-th item carrying a given
/// token sequence goes to that sequence's k-th occurrence, scanning left to
/// right. Matching is exact and case-sensitive.
pub fn position_cg(items: &[GeneratedItem], doc: &Document) -> (Vec<PositionedItem>, Vec<Discard>) {
    let mut used: HashMap<&[String], usize> = HashMap::new();
    let mut occurrences: HashMap<&[String], Vec<usize>> = HashMap::new();
    let mut placed = Vec::new();
    let mut discarded = Vec::new();
    for (arrival, item) in items.iter().enumerate() {
        let mention = item.mention.as_slice();
        let starts = occurrences.entry(mention).or_insert_with(|| {
            if mention.is_empty() || mention.len() > doc.tokens.len() {
                return Vec::new();
            }
            doc.tokens
                .windows(mention.len())
                .enumerate()
                .filter(|(_, w)| *w == mention)
                .map(|(i, _)| i)
                .collect()
        });
        let k = used.entry(mention).or_insert(0);
        match starts.get(*k) {
            Some(&start) => {
                *k += 1;
                placed.push(PositionedItem {
                    span: Span::new(start, start + mention.len()),
                    label: item.label.clone(),
                    confidence: item.confidence,
                    arrival,
                });
            }
            None => discarded.push(Discard {
                reason: DiscardReason::UnplaceableMention,
                original: OriginalPrediction {
                    arrival,
                    candidate_id: None,
                    mention: Some(item.mention.clone()),
                    span: None,
                    label: item.label.clone(),
                    confidence: item.confidence,
                },
            }),
        }
    }
    (placed, discarded)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardizedAssignment {
    pub candidate_id: String,
    pub label: String,
    pub provenance: Provenance,
    #[serde(skip)]
    pub span: Span,
}

/// One record projected onto its candidate set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardizedRecord {
    #[serde(skip)]
    pub line: usize,
    pub doc_id: String,
    #[serde(skip)]
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Anchor>,
    /// In candidate canonical order.
    pub assignments: Vec<StandardizedAssignment>,
    /// In arrival order.
    pub discarded: Vec<Discard>,
}

impl StandardizedRecord {
    pub fn to_json_line(&self) -> String {
        canonical_json(self)
    }

    /// The standardized labels as a classification record.
    pub fn to_cls_record(&self) -> PredictionRecord {
        PredictionRecord {
            line: self.line,
            doc_id: self.doc_id.clone(),
            task: self.task,
            anchor: self.anchor.clone(),
            payload: Payload::Assignments(
                self.assignments
                    .iter()
                    .map(|a| Assignment {
                        candidate_id: a.candidate_id.clone(),
                        label: a.label.clone(),
                        confidence: None,
                    })
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StandardizeOptions {
    pub stray_i: StrayI,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StandardizeError {
    #[error("line {line}: doc {doc_id}: record anchor {record} does not match candidate set anchor {candidates}")]
    AnchorMismatch {
        line: usize,
        doc_id: String,
        record: String,
        candidates: String,
    },
    #[error("line {line}: doc {doc_id}: unknown candidate id {candidate_id}")]
    UnknownCandidate {
        line: usize,
        doc_id: String,
        candidate_id: String,
    },
    #[error("line {line}: unknown doc_id {doc_id}")]
    UnknownDocument { line: usize, doc_id: String },
}

fn describe(anchor: &Option<Anchor>) -> String {
    anchor.as_ref().map_or_else(|| "none".into(), |a| a.to_string())
}

fn check_alignment(record: &PredictionRecord, candidates: &CandidateSet) -> Result<(), StandardizeError> {
    if record.doc_id != candidates.doc_id || record.task != candidates.task || record.anchor != candidates.anchor {
        return Err(StandardizeError::AnchorMismatch {
            line: record.line,
            doc_id: record.doc_id.clone(),
            record: describe(&record.anchor),
            candidates: describe(&candidates.anchor),
        });
    }
    Ok(())
}

/// A span-bearing prediction before candidate matching.
struct Located {
    span: Span,
    label: String,
    confidence: Option<f64>,
    original: OriginalPrediction,
}

fn locate(record: &PredictionRecord, doc: &Document, opts: &StandardizeOptions) -> (Vec<Located>, Vec<Discard>) {
    match &record.payload {
        Payload::Assignments(_) => unreachable!("classification records are not located"),
        Payload::Tags(tags) => {
            let located = decode_bio(tags, opts.stray_i)
                .into_iter()
                .enumerate()
                .map(|(arrival, (span, label))| Located {
                    original: OriginalPrediction {
                        arrival,
                        candidate_id: None,
                        mention: None,
                        span: Some(span),
                        label: label.clone(),
                        confidence: None,
                    },
                    span,
                    label,
                    confidence: None,
                })
                .collect();
            (located, Vec::new())
        }
        Payload::Spans(spans) => {
            let located = spans
                .iter()
                .enumerate()
                .map(|(arrival, s)| Located {
                    span: s.span,
                    label: s.label.clone(),
                    confidence: s.confidence,
                    original: OriginalPrediction {
                        arrival,
                        candidate_id: None,
                        mention: None,
                        span: Some(s.span),
                        label: s.label.clone(),
                        confidence: s.confidence,
                    },
                })
                .collect();
            (located, Vec::new())
        }
        Payload::Items(items) => {
            let (placed, discarded) = position_cg(items, doc);
            let located = placed
                .into_iter()
                .map(|p| Located {
                    original: OriginalPrediction {
                        arrival: p.arrival,
                        candidate_id: None,
                        mention: Some(items[p.arrival].mention.clone()),
                        span: Some(p.span),
                        label: p.label.clone(),
                        confidence: p.confidence,
                    },
                    span: p.span,
                    label: p.label,
                    confidence: p.confidence,
                })
                .collect();
            (located, discarded)
        }
    }
}

/// Projects one record onto `candidates`, which must be built for the same
/// document and anchor.
pub fn project(
    record: &PredictionRecord,
    doc: &Document,
    candidates: &CandidateSet,
    opts: &StandardizeOptions,
) -> Result<StandardizedRecord, StandardizeError> {
    check_alignment(record, candidates)?;
    let mut assignments = Vec::new();
    let mut discarded = Vec::new();

    if let Payload::Assignments(given) = &record.payload {
        for a in given {
            let cand = candidates.get(&a.candidate_id).ok_or_else(|| StandardizeError::UnknownCandidate {
                line: record.line,
                doc_id: record.doc_id.clone(),
                candidate_id: a.candidate_id.clone(),
            })?;
            assignments.push(StandardizedAssignment {
                candidate_id: cand.id.clone(),
                label: a.label.clone(),
                provenance: Provenance::Native,
                span: cand.span,
            });
        }
    } else {
        let (located, unplaced) = locate(record, doc, opts);
        discarded.extend(unplaced);
        let mut matched = Vec::new();
        for loc in located {
            match candidates.find_span(&loc.span) {
                Some(cand) => matched.push(MatchedPrediction {
                    candidate_id: cand.id.clone(),
                    label: loc.label,
                    confidence: loc.confidence,
                    arrival: loc.original.arrival,
                    original: loc.original,
                }),
                None => discarded.push(Discard {
                    reason: DiscardReason::OverlapMismatch,
                    original: loc.original,
                }),
            }
        }
        let resolution = resolve_duplicates(matched);
        discarded.extend(resolution.discarded);
        let base = if matches!(record.payload, Payload::Items(_)) {
            Provenance::Positioned
        } else {
            Provenance::Projected
        };
        for (id, (winner, contested)) in resolution.winners {
            let span = candidates.get(&id).expect("matched ids come from the set").span;
            assignments.push(StandardizedAssignment {
                candidate_id: id,
                label: winner.label,
                provenance: if contested { Provenance::ResolvedDuplicate } else { base },
                span,
            });
        }
    }

    let order: HashMap<&str, usize> = candidates
        .candidates()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    assignments.sort_by_key(|a| order[a.candidate_id.as_str()]);
    discarded.sort_by_key(|d| d.original.arrival);

    Ok(StandardizedRecord {
        line: record.line,
        doc_id: record.doc_id.clone(),
        task: record.task,
        anchor: record.anchor.clone(),
        assignments,
        discarded,
    })
}

/// Predictions taken at face value, for scoring without standardization.
/// `span` is `None` for generated mentions that could not be placed.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub span: Option<Span>,
    pub label: String,
}

pub fn raw_predictions(
    record: &PredictionRecord,
    doc: &Document,
    candidates: &CandidateSet,
    opts: &StandardizeOptions,
) -> Result<Vec<RawPrediction>, StandardizeError> {
    check_alignment(record, candidates)?;
    match &record.payload {
        Payload::Assignments(given) => given
            .iter()
            .map(|a| {
                let cand = candidates.get(&a.candidate_id).ok_or_else(|| StandardizeError::UnknownCandidate {
                    line: record.line,
                    doc_id: record.doc_id.clone(),
                    candidate_id: a.candidate_id.clone(),
                })?;
                Ok(RawPrediction { span: Some(cand.span), label: a.label.clone() })
            })
            .collect(),
        Payload::Items(items) => {
            let (placed, unplaced) = position_cg(items, doc);
            let mut all: Vec<(usize, RawPrediction)> = placed
                .into_iter()
                .map(|p| (p.arrival, RawPrediction { span: Some(p.span), label: p.label }))
                .chain(unplaced.into_iter().map(|d| {
                    (d.original.arrival, RawPrediction { span: None, label: d.original.label })
                }))
                .collect();
            all.sort_by_key(|(i, _)| *i);
            Ok(all.into_iter().map(|(_, p)| p).collect())
        }
        _ => {
            let (located, _) = locate(record, doc, opts);
            Ok(located
                .into_iter()
                .map(|l| RawPrediction { span: Some(l.span), label: l.label })
                .collect())
        }
    }
}

/// Either the standardized or the face-value reading of one record.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoredRecord {
    Standardized(StandardizedRecord),
    Raw {
        doc_id: String,
        anchor: Option<Anchor>,
        predictions: Vec<RawPrediction>,
    },
}

impl ScoredRecord {
    pub fn doc_id(&self) -> &str {
        match self {
            ScoredRecord::Standardized(r) => &r.doc_id,
            ScoredRecord::Raw { doc_id, .. } => doc_id,
        }
    }

    pub fn anchor(&self) -> Option<&Anchor> {
        match self {
            ScoredRecord::Standardized(r) => r.anchor.as_ref(),
            ScoredRecord::Raw { anchor, .. } => anchor.as_ref(),
        }
    }

    /// `(span, label)` pairs that enter scoring.
    pub fn predictions(&self) -> Vec<RawPrediction> {
        match self {
            ScoredRecord::Standardized(r) => r
                .assignments
                .iter()
                .map(|a| RawPrediction { span: Some(a.span), label: a.label.clone() })
                .collect(),
            ScoredRecord::Raw { predictions, .. } => predictions.clone(),
        }
    }
}

/// Reads every record of `file` against `corpus`, standardized or at face
/// value. Records are processed in parallel; output order is file order.
pub fn prepare_records(
    file: &PredictionFile,
    corpus: &Corpus,
    policy: &CandidatePolicy,
    opts: &StandardizeOptions,
    standardize: bool,
) -> Result<Vec<ScoredRecord>, StandardizeError> {
    let docs: HashMap<&str, &Document> = corpus.documents.iter().map(|d| (d.id.as_str(), d)).collect();
    file.records
        .par_iter()
        .map(|record| {
            let doc = docs.get(record.doc_id.as_str()).ok_or_else(|| StandardizeError::UnknownDocument {
                line: record.line,
                doc_id: record.doc_id.clone(),
            })?;
            let candidates = build_candidates(doc, record.anchor.as_ref(), policy);
            if standardize {
                project(record, doc, &candidates, opts).map(ScoredRecord::Standardized)
            } else {
                raw_predictions(record, doc, &candidates, opts).map(|predictions| ScoredRecord::Raw {
                    doc_id: record.doc_id.clone(),
                    anchor: record.anchor.clone(),
                    predictions,
                })
            }
        })
        .collect()
}

/// Standardizes every record of `file`.
pub fn standardize_file(
    file: &PredictionFile,
    corpus: &Corpus,
    policy: &CandidatePolicy,
    opts: &StandardizeOptions,
) -> Result<Vec<StandardizedRecord>, StandardizeError> {
    Ok(prepare_records(file, corpus, policy, opts, true)?
        .into_iter()
        .map(|r| match r {
            ScoredRecord::Standardized(s) => s,
            ScoredRecord::Raw { .. } => unreachable!("standardize = true"),
        })
        .collect())
}
