//! Random corpora, random predictions and an exhaustive matcher used as an
//! independent reference for the scorer. Shared with the acceptance harness
//! of the CLI crate.
#![allow(dead_code)]

use std::collections::BTreeSet;

use eeval::ingest::{Assignment, BioTag, GeneratedItem, Payload, PredictionFile, PredictionRecord, SpanPrediction};
use eeval::model::{Argument, Document, EntityMention, EventAnnotation, MentionKind};
use eeval::standardize::trigger_candidate_id;
use eeval::{Anchor, CandidatePolicy, ConfusionCounts, Corpus, Paradigm, Span, Task, TriggerPolicy, NIL_LABEL};
use rand::seq::SliceRandom;
use rand::Rng;

pub const VOCAB: [&str; 4] = ["a", "b", "c", "d"];
pub const TYPES: [&str; 3] = ["A", "B", "C"];
pub const ROLES: [&str; 3] = ["R1", "R2", "R3"];
pub const KINDS: [MentionKind; 4] = [MentionKind::Entity, MentionKind::Value, MentionKind::Time, MentionKind::Pronoun];

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_docs: usize,
    pub max_tokens: usize,
    pub max_events: usize,
    pub max_mentions: usize,
    /// No two gold items share a standardized slot: distinct trigger spans
    /// per document, distinct mention spans, one role per entity per event.
    pub distinct_slots: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_docs: 5, max_tokens: 8, max_events: 3, max_mentions: 4, distinct_slots: false }
    }
}

fn random_span(rng: &mut impl Rng, within: Span, max_len: usize) -> Span {
    let len = rng.gen_range(1..=max_len.min(within.len()));
    let start = rng.gen_range(within.start..=within.end - len);
    Span::new(start, start + len)
}

pub fn random_document(rng: &mut impl Rng, id: String, limits: &Limits) -> Document {
    let n = rng.gen_range(1..=limits.max_tokens);
    let tokens: Vec<String> = (0..n).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect();

    let mut cuts: Vec<usize> = (1..n).filter(|_| rng.gen_bool(0.25)).collect();
    cuts.push(n);
    let mut sentences = Vec::new();
    let mut start = 0;
    for c in cuts {
        sentences.push(Span::new(start, c));
        start = c;
    }

    let whole = Span::new(0, n);
    let mut entities = Vec::new();
    let mut used_spans = BTreeSet::new();
    for i in 0..rng.gen_range(0..=limits.max_mentions) {
        let span = random_span(rng, whole, 3);
        if limits.distinct_slots && !used_spans.insert(span) {
            continue;
        }
        let head = random_span(rng, span, span.len());
        entities.push(EntityMention { id: format!("m{i}"), span, head_span: head, kind: *KINDS.choose(rng).unwrap() });
    }

    let mut events = Vec::new();
    let mut used_triggers = BTreeSet::new();
    for i in 0..rng.gen_range(0..=limits.max_events) {
        let sentence = *sentences.choose(rng).unwrap();
        let trigger = random_span(rng, sentence, 2);
        if limits.distinct_slots && !used_triggers.insert(trigger) {
            continue;
        }
        let mut arguments = Vec::new();
        let mut pairs = BTreeSet::new();
        for e in &entities {
            let roles = if limits.distinct_slots { 1 } else { 2 };
            for _ in 0..roles {
                if rng.gen_bool(0.4) {
                    let role = *ROLES.choose(rng).unwrap();
                    if pairs.insert((e.id.clone(), role)) {
                        arguments.push(Argument { entity_id: e.id.clone(), role: role.into() });
                    }
                }
            }
        }
        events.push(EventAnnotation {
            id: format!("ev{i}"),
            event_type: TYPES.choose(rng).unwrap().to_string(),
            trigger,
            arguments,
        });
    }

    Document { id, tokens, sentences, entities, events }
}

pub fn random_corpus(rng: &mut impl Rng, limits: &Limits) -> Corpus {
    let docs = rng.gen_range(1..=limits.max_docs);
    Corpus::new((0..docs).map(|i| random_document(rng, format!("doc{i}"), limits)).collect())
}

pub fn policy_covering(corpus: &Corpus) -> CandidatePolicy {
    let longest = corpus
        .documents
        .iter()
        .flat_map(|d| d.events.iter().map(|e| e.trigger.len()))
        .max()
        .unwrap_or(1)
        .max(1);
    CandidatePolicy { trigger: TriggerPolicy::SpansUpTo(longest.try_into().unwrap()) }
}

fn maybe_confidences(rng: &mut impl Rng, n: usize) -> Vec<Option<f64>> {
    if rng.gen_bool(0.5) {
        // Coarse grid so ties happen.
        (0..n).map(|_| Some(rng.gen_range(0..=4) as f64 / 4.0)).collect()
    } else {
        vec![None; n]
    }
}

fn random_label(rng: &mut impl Rng, labels: &[&str]) -> String {
    if rng.gen_bool(0.1) {
        NIL_LABEL.to_string()
    } else if rng.gen_bool(0.05) {
        "Unseen".to_string()
    } else {
        labels.choose(rng).unwrap().to_string()
    }
}

/// Random payload of `paradigm` for one record over `doc`. `candidates`
/// lists the candidate `(id, span)`s of the record's candidate set.
pub fn random_payload(
    rng: &mut impl Rng,
    paradigm: Paradigm,
    doc: &Document,
    candidates: &[(String, Span)],
    labels: &[&str],
) -> Payload {
    let n = doc.tokens.len();
    let whole = Span::new(0, n);
    let count = rng.gen_range(0..=4);
    match paradigm {
        Paradigm::Cls => {
            let mut chosen: Vec<&(String, Span)> = candidates.iter().filter(|_| rng.gen_bool(0.3)).collect();
            chosen.shuffle(rng);
            let confs = maybe_confidences(rng, chosen.len());
            Payload::Assignments(
                chosen
                    .into_iter()
                    .zip(confs)
                    .map(|((id, _), confidence)| Assignment { candidate_id: id.clone(), label: random_label(rng, labels), confidence })
                    .collect(),
            )
        }
        Paradigm::Sl => Payload::Tags(
            (0..n)
                .map(|_| match rng.gen_range(0..3) {
                    0 => BioTag::Outside,
                    1 => BioTag::Begin(labels.choose(rng).unwrap().to_string()),
                    _ => BioTag::Inside(labels.choose(rng).unwrap().to_string()),
                })
                .collect(),
        ),
        Paradigm::Sp => {
            let confs = maybe_confidences(rng, count);
            Payload::Spans(
                confs
                    .into_iter()
                    .map(|confidence| {
                        let span = if !candidates.is_empty() && rng.gen_bool(0.6) {
                            candidates.choose(rng).unwrap().1
                        } else {
                            random_span(rng, whole, 3)
                        };
                        SpanPrediction { span, label: random_label(rng, labels), confidence }
                    })
                    .collect(),
            )
        }
        Paradigm::Cg => {
            let confs = maybe_confidences(rng, count);
            Payload::Items(
                confs
                    .into_iter()
                    .map(|confidence| {
                        let mention = if rng.gen_bool(0.85) {
                            let span = if !candidates.is_empty() && rng.gen_bool(0.6) {
                                candidates.choose(rng).unwrap().1
                            } else {
                                random_span(rng, whole, 2)
                            };
                            doc.tokens[span.tokens()].to_vec()
                        } else {
                            vec!["zzz".to_string()]
                        };
                        GeneratedItem { mention, label: random_label(rng, labels), confidence }
                    })
                    .collect(),
            )
        }
    }
}

pub fn trigger_candidates(doc: &Document, policy: &CandidatePolicy) -> Vec<(String, Span)> {
    eeval::build_candidates(doc, None, policy).candidates().iter().map(|c| (c.id.clone(), c.span)).collect()
}

pub fn argument_candidates(doc: &Document) -> Vec<(String, Span)> {
    doc.entities.iter().map(|m| (m.id.clone(), m.span)).collect()
}

pub fn random_ed_predictions(rng: &mut impl Rng, corpus: &Corpus, paradigm: Paradigm, policy: &CandidatePolicy) -> PredictionFile {
    let mut records = Vec::new();
    for (i, doc) in corpus.documents.iter().enumerate() {
        if rng.gen_bool(0.9) {
            records.push(PredictionRecord {
                line: i + 1,
                doc_id: doc.id.clone(),
                task: Task::Trigger,
                anchor: None,
                payload: random_payload(rng, paradigm, doc, &trigger_candidates(doc, policy), &TYPES),
            });
        }
    }
    PredictionFile { paradigm, records }
}

/// One random argument record per anchor in `anchors`.
pub fn random_eae_predictions(rng: &mut impl Rng, corpus: &Corpus, paradigm: Paradigm, anchors: &[(String, Anchor)]) -> PredictionFile {
    let mut records = Vec::new();
    for (i, (doc_id, anchor)) in anchors.iter().enumerate() {
        if rng.gen_bool(0.9) {
            let doc = corpus.get(doc_id).unwrap();
            records.push(PredictionRecord {
                line: i + 1,
                doc_id: doc_id.clone(),
                task: Task::Argument,
                anchor: Some(anchor.clone()),
                payload: random_payload(rng, paradigm, doc, &argument_candidates(doc), &ROLES),
            });
        }
    }
    PredictionFile { paradigm, records }
}

/// Gold triggers written as span predictions, one record per document.
pub fn gold_ed_as_sp(corpus: &Corpus) -> PredictionFile {
    PredictionFile {
        paradigm: Paradigm::Sp,
        records: corpus
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| PredictionRecord {
                line: i + 1,
                doc_id: d.id.clone(),
                task: Task::Trigger,
                anchor: None,
                payload: Payload::Spans(
                    d.events
                        .iter()
                        .map(|e| SpanPrediction { span: e.trigger, label: e.event_type.clone(), confidence: None })
                        .collect(),
                ),
            })
            .collect(),
    }
}

/// Gold triggers written as classification assignments.
pub fn gold_ed_as_cls(corpus: &Corpus) -> PredictionFile {
    PredictionFile {
        paradigm: Paradigm::Cls,
        records: corpus
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| PredictionRecord {
                line: i + 1,
                doc_id: d.id.clone(),
                task: Task::Trigger,
                anchor: None,
                payload: Payload::Assignments(
                    d.events
                        .iter()
                        .map(|e| Assignment { candidate_id: trigger_candidate_id(e.trigger), label: e.event_type.clone(), confidence: None })
                        .collect(),
                ),
            })
            .collect(),
    }
}

/// Gold arguments as span predictions, one record per gold event.
pub fn gold_eae_as_sp(corpus: &Corpus) -> PredictionFile {
    let mut records = Vec::new();
    for d in &corpus.documents {
        for e in &d.events {
            records.push(PredictionRecord {
                line: records.len() + 1,
                doc_id: d.id.clone(),
                task: Task::Argument,
                anchor: Some(Anchor { trigger: e.trigger, event_type: e.event_type.clone() }),
                payload: Payload::Spans(
                    e.arguments
                        .iter()
                        .map(|a| SpanPrediction { span: d.entity(&a.entity_id).unwrap().span, label: a.role.clone(), confidence: None })
                        .collect(),
                ),
            });
        }
    }
    PredictionFile { paradigm: Paradigm::Sp, records }
}

pub fn gold_anchors(corpus: &Corpus) -> Vec<(String, Anchor)> {
    let mut set = BTreeSet::new();
    for d in &corpus.documents {
        for e in &d.events {
            set.insert((d.id.clone(), Anchor { trigger: e.trigger, event_type: e.event_type.clone() }));
        }
    }
    set.into_iter().collect()
}

/// Reference BIO decoder: walk tags, open on B (or on a stray I when
/// allowed), extend on I of the same label, close otherwise.
pub fn reference_bio(tags: &[BioTag], stray_i: eeval::StrayI) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (begin, label) = match tag {
            BioTag::Outside => (false, None),
            BioTag::Begin(l) => (true, Some(l.clone())),
            BioTag::Inside(l) => (false, Some(l.clone())),
        };
        let continues = !begin && label.is_some() && open.as_ref().map(|(_, l)| l) == label.as_ref();
        if continues {
            continue;
        }
        if let Some((s, l)) = open.take() {
            out.push((s, i, l));
        }
        if let Some(l) = label {
            if begin || stray_i == eeval::StrayI::OpenSpan {
                open = Some((i, l));
            }
        }
    }
    if let Some((s, l)) = open {
        out.push((s, tags.len(), l));
    }
    out
}

// ---------------------------------------------------------------------------
// Exhaustive matcher

/// A scorable item: document, the event type it is filed under, an optional
/// trigger span constraint, its own span (None = never matches), and label.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub doc: String,
    pub event_type: String,
    pub trigger: Option<Span>,
    pub span: Option<Span>,
    pub label: String,
}

fn compatible(p: &Item, g: &Item) -> bool {
    p.doc == g.doc
        && p.span.is_some()
        && p.span == g.span
        && p.label == g.label
        && p.event_type == g.event_type
        && (p.trigger.is_none() || g.trigger.is_none() || p.trigger == g.trigger)
}

/// Largest number of disjoint compatible (prediction, gold) pairs, found by
/// trying every assignment of each prediction to an unused gold or to
/// nothing.
pub fn brute_force_counts(preds: &[Item], golds: &[Item]) -> ConfusionCounts {
    fn search(i: usize, preds: &[Item], golds: &[Item], used: &mut Vec<bool>, best: &mut u64, current: u64) {
        if current + (preds.len() - i) as u64 <= *best {
            return;
        }
        if i == preds.len() {
            *best = current;
            return;
        }
        for j in 0..golds.len() {
            if !used[j] && compatible(&preds[i], &golds[j]) {
                used[j] = true;
                search(i + 1, preds, golds, used, best, current + 1);
                used[j] = false;
            }
        }
        search(i + 1, preds, golds, used, best, current);
    }
    let mut best = 0;
    search(0, preds, golds, &mut vec![false; golds.len()], &mut best, 0);
    ConfusionCounts::new(best, preds.len() as u64 - best, golds.len() as u64 - best)
}

/// Gold triggers; predictions must already be filtered of the nil label.
pub fn ed_gold_items(corpus: &Corpus) -> Vec<Item> {
    corpus
        .documents
        .iter()
        .flat_map(|d| {
            d.events.iter().map(|e| Item {
                doc: d.id.clone(),
                event_type: String::new(),
                trigger: None,
                span: Some(e.trigger),
                label: e.event_type.clone(),
            })
        })
        .collect()
}

/// Gold arguments in scope. `context` holds (doc, trigger span, type) of every
/// trigger handed to the EAE model; under `legacy`, only events some context
/// trigger addresses are kept.
pub fn eae_gold_items(corpus: &Corpus, context: &[(String, Span, String)], legacy: bool, by_trigger_span: bool) -> Vec<Item> {
    let mut out = Vec::new();
    for d in &corpus.documents {
        for e in &d.events {
            let addressed = context
                .iter()
                .any(|(doc, span, ty)| *doc == d.id && *ty == e.event_type && (!by_trigger_span || *span == e.trigger));
            if legacy && !addressed {
                continue;
            }
            for a in &e.arguments {
                out.push(Item {
                    doc: d.id.clone(),
                    event_type: e.event_type.clone(),
                    trigger: by_trigger_span.then_some(e.trigger),
                    span: Some(d.entity(&a.entity_id).unwrap().span),
                    label: a.role.clone(),
                });
            }
        }
    }
    out
}

pub fn ed_pred_items(preds: &[eeval::metrics::Prediction]) -> Vec<Item> {
    preds
        .iter()
        .filter(|p| p.label != NIL_LABEL)
        .map(|p| Item { doc: p.doc_id.clone(), event_type: String::new(), trigger: None, span: p.span, label: p.label.clone() })
        .collect()
}

pub fn eae_pred_items(preds: &[eeval::metrics::Prediction], by_trigger_span: bool) -> Vec<Item> {
    preds
        .iter()
        .filter(|p| p.label != NIL_LABEL)
        .map(|p| {
            let anchor = p.anchor.as_ref().unwrap();
            Item {
                doc: p.doc_id.clone(),
                event_type: anchor.event_type.clone(),
                trigger: by_trigger_span.then_some(anchor.trigger),
                span: p.span,
                label: p.label.clone(),
            }
        })
        .collect()
}
