//! Confusion counts and micro precision/recall/F1 for event detection (ED)
//! and event argument extraction (EAE).
//!
//! ED: a predicted `(trigger span, event type)` is correct iff a gold event
//! has the same span and type. EAE: a predicted `(argument span, role)` under
//! an anchor of type `E` is correct iff a gold event of type `E` in the same
//! document has an argument with that span and role (or, with
//! [`EaeMatch::ByTriggerSpan`], a gold event with the anchor's exact trigger
//! span). A gold item is matched at most once. Predictions labelled
//! [`NIL_LABEL`] are treated as absent.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::model::{Anchor, Corpus, Span, NIL_LABEL};
use crate::pipeline::TriggerContext;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub const fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, fn_ }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        ConfusionCounts::new(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_)
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

fn ratio<T: Scalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

/// Precision, recall and F1 with every `0/0` defined as 0.
pub fn prf<T: Scalar>(counts: ConfusionCounts) -> Prf<T> {
    let precision: T = ratio(counts.tp, counts.tp + counts.fp);
    let recall: T = ratio(counts.tp, counts.tp + counts.fn_);
    let sum = precision + recall;
    let f1 = if sum == T::zero() {
        T::zero()
    } else {
        (T::one() + T::one()) * precision * recall / sum
    };
    Prf { precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvalTask {
    #[serde(rename = "ED")]
    Ed,
    #[serde(rename = "EAE")]
    Eae,
}

impl fmt::Display for EvalTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalTask::Ed => "ED",
            EvalTask::Eae => "EAE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    GoldTrigger,
    Pipeline,
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "gold_trigger" => Ok(EvalMode::GoldTrigger),
            "pipeline" => Ok(EvalMode::Pipeline),
            _ => Err(format!("unknown mode {s:?} (expected gold_trigger or pipeline)")),
        }
    }
}

/// Which gold arguments enter the recall base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Every gold argument.
    #[default]
    Modern,
    /// Only arguments of gold events some context trigger reaches.
    Legacy,
}

impl FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "modern" => Ok(Convention::Modern),
            "legacy" => Ok(Convention::Legacy),
            _ => Err(format!("unknown convention {s:?} (expected modern or legacy)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EaeMatch {
    #[default]
    ByEventType,
    ByTriggerSpan,
}

impl FromStr for EaeMatch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "by_event_type" => Ok(EaeMatch::ByEventType),
            "by_trigger_span" => Ok(EaeMatch::ByTriggerSpan),
            _ => Err(format!("unknown argument matching {s:?} (expected by_event_type or by_trigger_span)")),
        }
    }
}

fn six_decimals<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    let raw = serde_json::value::RawValue::from_string(format!("{x:.6}")).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

/// Counts with their derived scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub counts: ConfusionCounts,
    #[serde(serialize_with = "six_decimals")]
    pub precision: f64,
    #[serde(serialize_with = "six_decimals")]
    pub recall: f64,
    #[serde(serialize_with = "six_decimals")]
    pub f1: f64,
}

impl Scores {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let p: Prf<f64> = prf(counts);
        Scores { counts, precision: p.precision, recall: p.recall, f1: p.f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: EvalTask,
    pub mode: EvalMode,
    pub convention: Convention,
    pub counts: ConfusionCounts,
    #[serde(serialize_with = "six_decimals")]
    pub precision: f64,
    #[serde(serialize_with = "six_decimals")]
    pub recall: f64,
    #[serde(serialize_with = "six_decimals")]
    pub f1: f64,
    pub per_label: BTreeMap<String, ConfusionCounts>,
    /// Span-only matching, labels ignored (trigger or argument
    /// identification).
    pub identification: Scores,
}

impl EvalReport {
    fn assemble(
        task: EvalTask,
        mode: EvalMode,
        convention: Convention,
        per_label: BTreeMap<String, ConfusionCounts>,
        identification: ConfusionCounts,
    ) -> Self {
        let counts: ConfusionCounts = per_label.values().copied().sum();
        let scores = Scores::from_counts(counts);
        EvalReport {
            task,
            mode,
            convention,
            counts,
            precision: scores.precision,
            recall: scores.recall,
            f1: scores.f1,
            per_label,
            identification: Scores::from_counts(identification),
        }
    }

    pub fn scores(&self) -> Scores {
        Scores {
            counts: self.counts,
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reports always serialize")
    }
}

/// One effective prediction: a label on a span (or on nothing, for a
/// generated mention that could not be placed).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub doc_id: String,
    pub anchor: Option<Anchor>,
    pub span: Option<Span>,
    pub label: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction for unknown doc_id {doc_id}")]
    UnknownDocument { doc_id: String },
    #[error("doc {doc_id}: argument prediction without anchor")]
    MissingAnchor { doc_id: String },
    #[error("doc {doc_id}: anchor {anchor} is not a trigger of the evaluation context")]
    AnchorNotInContext { doc_id: String, anchor: String },
}

/// Multiset of gold keys; `take` consumes one copy.
struct GoldPool<K> {
    remaining: HashMap<K, Vec<String>>,
}

impl<K: std::hash::Hash + Eq> GoldPool<K> {
    fn new() -> Self {
        GoldPool { remaining: HashMap::new() }
    }

    fn add(&mut self, key: K, label: String) {
        self.remaining.entry(key).or_default().push(label);
    }

    fn take(&mut self, key: &K) -> bool {
        match self.remaining.get_mut(key) {
            Some(v) if !v.is_empty() => {
                v.pop();
                true
            }
            _ => false,
        }
    }

    fn leftover(self) -> impl Iterator<Item = String> {
        self.remaining.into_values().flatten()
    }
}

fn tally<K: std::hash::Hash + Eq>(
    golds: Vec<(K, String)>,
    preds: Vec<(Option<K>, String)>,
) -> BTreeMap<String, ConfusionCounts> {
    let mut per_label: BTreeMap<String, ConfusionCounts> = BTreeMap::new();
    let mut pool = GoldPool::new();
    for (key, label) in golds {
        per_label.entry(label.clone()).or_default();
        pool.add(key, label);
    }
    for (key, label) in preds {
        let hit = key.as_ref().is_some_and(|k| pool.take(k));
        let c = per_label.entry(label).or_default();
        if hit {
            c.tp += 1;
        } else {
            c.fp += 1;
        }
    }
    for label in pool.leftover() {
        per_label.entry(label).or_default().fn_ += 1;
    }
    per_label
}

fn total(per_label: BTreeMap<String, ConfusionCounts>) -> ConfusionCounts {
    per_label.into_values().sum()
}

fn doc_index(corpus: &Corpus) -> HashMap<&str, usize> {
    corpus.documents.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect()
}

/// Scores trigger predictions against the gold events of `gold`.
pub fn score_ed(
    gold: &Corpus,
    predictions: &[Prediction],
    mode: EvalMode,
    convention: Convention,
) -> Result<EvalReport, MetricsError> {
    let index = doc_index(gold);
    let mut preds = Vec::new();
    for p in predictions {
        let doc = *index.get(p.doc_id.as_str()).ok_or_else(|| MetricsError::UnknownDocument {
            doc_id: p.doc_id.clone(),
        })?;
        if p.label != NIL_LABEL {
            preds.push((doc, p.span, p.label.clone()));
        }
    }
    let golds: Vec<(usize, Span, String)> = gold
        .documents
        .iter()
        .enumerate()
        .flat_map(|(i, d)| d.events.iter().map(move |e| (i, e.trigger, e.event_type.clone())))
        .collect();

    let classification = tally(
        golds.iter().map(|(d, s, l)| ((*d, *s, l.clone()), l.clone())).collect(),
        preds.iter().map(|(d, s, l)| (s.map(|s| (*d, s, l.clone())), l.clone())).collect(),
    );
    let identification = total(tally(
        golds.iter().map(|(d, s, _)| ((*d, *s), String::new())).collect(),
        preds.iter().map(|(d, s, _)| (s.map(|s| (*d, s)), String::new())).collect(),
    ));
    Ok(EvalReport::assemble(EvalTask::Ed, mode, convention, classification, identification))
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct ArgKey {
    doc: usize,
    event_type: String,
    trigger: Option<Span>,
    span: Span,
}

/// Scores argument predictions. Every prediction must be anchored to a
/// trigger of `context`.
pub fn score_eae(
    gold: &Corpus,
    predictions: &[Prediction],
    context: &TriggerContext,
    mode: EvalMode,
    convention: Convention,
    eae_match: EaeMatch,
) -> Result<EvalReport, MetricsError> {
    let index = doc_index(gold);
    let by_span = eae_match == EaeMatch::ByTriggerSpan;

    let mut preds = Vec::new();
    for p in predictions {
        let doc = *index.get(p.doc_id.as_str()).ok_or_else(|| MetricsError::UnknownDocument {
            doc_id: p.doc_id.clone(),
        })?;
        let anchor = p.anchor.as_ref().ok_or_else(|| MetricsError::MissingAnchor { doc_id: p.doc_id.clone() })?;
        if !context.contains(&p.doc_id, anchor) {
            return Err(MetricsError::AnchorNotInContext {
                doc_id: p.doc_id.clone(),
                anchor: anchor.to_string(),
            });
        }
        if p.label == NIL_LABEL {
            continue;
        }
        let key = p.span.map(|span| ArgKey {
            doc,
            event_type: anchor.event_type.clone(),
            trigger: by_span.then_some(anchor.trigger),
            span,
        });
        preds.push((key, p.label.clone()));
    }

    let mut golds = Vec::new();
    for (i, doc) in gold.documents.iter().enumerate() {
        for ev in &doc.events {
            if convention == Convention::Legacy && !context.reaches(&doc.id, ev, eae_match) {
                continue;
            }
            for arg in &ev.arguments {
                let mention = doc.entity(&arg.entity_id).expect("validated corpus resolves entity ids");
                let key = ArgKey {
                    doc: i,
                    event_type: ev.event_type.clone(),
                    trigger: by_span.then_some(ev.trigger),
                    span: mention.span,
                };
                golds.push((key, arg.role.clone()));
            }
        }
    }

    let classification = tally(
        golds.iter().map(|(k, r)| ((k.clone(), r.clone()), r.clone())).collect(),
        preds.iter().map(|(k, r)| (k.clone().map(|k| (k, r.clone())), r.clone())).collect(),
    );
    let identification = total(tally(
        golds.into_iter().map(|(k, _)| (k, String::new())).collect(),
        preds.into_iter().map(|(k, _)| (k, String::new())).collect(),
    ));
    Ok(EvalReport::assemble(EvalTask::Eae, mode, convention, classification, identification))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Argument, Document, EntityMention, EventAnnotation, MentionKind};
    use num_rational::Rational64;

    fn doc(id: &str, events: Vec<(&str, Span)>) -> Document {
        Document {
            id: id.into(),
            tokens: (0..10).map(|i| format!("w{i}")).collect(),
            sentences: vec![Span::new(0, 10)],
            entities: vec![],
            events: events
                .into_iter()
                .enumerate()
                .map(|(i, (t, s))| EventAnnotation {
                    id: format!("ev{i}"),
                    event_type: t.into(),
                    trigger: s,
                    arguments: vec![],
                })
                .collect(),
        }
    }

    fn pred(doc: &str, span: (usize, usize), label: &str) -> Prediction {
        Prediction {
            doc_id: doc.into(),
            anchor: None,
            span: Some(Span::new(span.0, span.1)),
            label: label.into(),
        }
    }

    #[test]
    fn prf_arithmetic() {
        let p: Prf<f64> = prf(ConfusionCounts::new(2, 1, 2));
        assert!((p.precision - 0.6667).abs() < 5e-5);
        assert!((p.recall - 0.5).abs() < 5e-5);
        assert!((p.f1 - 0.5714).abs() < 5e-5);
        let exact: Prf<Rational64> = prf(ConfusionCounts::new(2, 1, 2));
        assert_eq!(exact.f1, Rational64::new(4, 7));
        let zero: Prf<f64> = prf(ConfusionCounts::default());
        assert_eq!((zero.precision, zero.recall, zero.f1), (0.0, 0.0, 0.0));
        let one: Prf<f32> = prf(ConfusionCounts::new(5, 0, 0));
        assert_eq!((one.precision, one.recall, one.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn ed_perfect_and_wrong_type() {
        let gold = Corpus::new(vec![doc("d", vec![("End-Position", Span::new(5, 6))])]);
        let ok = score_ed(&gold, &[pred("d", (5, 6), "End-Position")], EvalMode::GoldTrigger, Convention::Modern).unwrap();
        assert_eq!(ok.counts, ConfusionCounts::new(1, 0, 0));
        assert_eq!((ok.precision, ok.recall, ok.f1), (1.0, 1.0, 1.0));
        let bad = score_ed(&gold, &[pred("d", (5, 6), "Attack")], EvalMode::GoldTrigger, Convention::Modern).unwrap();
        assert_eq!(bad.counts, ConfusionCounts::new(0, 1, 1));
        assert_eq!(bad.f1, 0.0);
        assert_eq!(bad.identification.counts, ConfusionCounts::new(1, 0, 0));
        assert_eq!(bad.per_label["Attack"], ConfusionCounts::new(0, 1, 0));
        assert_eq!(bad.per_label["End-Position"], ConfusionCounts::new(0, 0, 1));
    }

    #[test]
    fn ed_nil_predictions_are_ignored_and_unknown_docs_rejected() {
        let gold = Corpus::new(vec![doc("d", vec![("A", Span::new(1, 2))])]);
        let r = score_ed(&gold, &[pred("d", (3, 4), NIL_LABEL)], EvalMode::GoldTrigger, Convention::Modern).unwrap();
        assert_eq!(r.counts, ConfusionCounts::new(0, 0, 1));
        assert!(matches!(
            score_ed(&gold, &[pred("x", (1, 2), "A")], EvalMode::GoldTrigger, Convention::Modern),
            Err(MetricsError::UnknownDocument { .. })
        ));
    }

    #[test]
    fn ed_gold_matched_at_most_once() {
        let gold = Corpus::new(vec![doc("d", vec![("A", Span::new(1, 2))])]);
        let preds = [pred("d", (1, 2), "A"), pred("d", (1, 2), "A")];
        let r = score_ed(&gold, &preds, EvalMode::GoldTrigger, Convention::Modern).unwrap();
        assert_eq!(r.counts, ConfusionCounts::new(1, 1, 0));
    }

    /// Three documents, four gold triggers, five predictions of which two
    /// are correct. Pairs enumerated by hand:
    ///   d1: gold (1,2):A, (4,5):B   preds (1,2):A ok, (4,5):A wrong type
    ///   d2: gold (0,1):C            preds (0,1):C ok, (2,3):C spurious
    ///   d3: gold (3,4):A            preds (6,7):A wrong span
    #[test]
    fn ed_three_document_fixture() {
        let gold = Corpus::new(vec![
            doc("d1", vec![("A", Span::new(1, 2)), ("B", Span::new(4, 5))]),
            doc("d2", vec![("C", Span::new(0, 1))]),
            doc("d3", vec![("A", Span::new(3, 4))]),
        ]);
        let preds = [
            pred("d1", (1, 2), "A"),
            pred("d1", (4, 5), "A"),
            pred("d2", (0, 1), "C"),
            pred("d2", (2, 3), "C"),
            pred("d3", (6, 7), "A"),
        ];
        let r = score_ed(&gold, &preds, EvalMode::GoldTrigger, Convention::Modern).unwrap();
        assert_eq!(r.counts, ConfusionCounts::new(2, 3, 2));
        let exact: Prf<Rational64> = prf(r.counts);
        assert_eq!(exact.precision, Rational64::new(2, 5));
        assert_eq!(exact.recall, Rational64::new(1, 2));
        assert_eq!(exact.f1, Rational64::new(4, 9));
        assert_eq!(r.to_json().matches("0.444444").count(), 1);
    }

    fn eae_fixture() -> Corpus {
        let mut d = doc("d", vec![("A", Span::new(0, 1)), ("B", Span::new(5, 6))]);
        for (i, s) in [(1, 2), (2, 4), (6, 7), (7, 9)].into_iter().enumerate() {
            d.entities.push(EntityMention {
                id: format!("m{i}"),
                span: Span::new(s.0, s.1),
                head_span: Span::new(s.0, s.0 + 1),
                kind: MentionKind::Entity,
            });
        }
        d.events[0].arguments = vec![
            Argument { entity_id: "m0".into(), role: "R1".into() },
            Argument { entity_id: "m1".into(), role: "R2".into() },
        ];
        d.events[1].arguments = vec![
            Argument { entity_id: "m2".into(), role: "R1".into() },
            Argument { entity_id: "m3".into(), role: "R2".into() },
        ];
        Corpus::new(vec![d])
    }

    fn arg_pred(anchor: &Anchor, span: (usize, usize), role: &str) -> Prediction {
        Prediction {
            doc_id: "d".into(),
            anchor: Some(anchor.clone()),
            span: Some(Span::new(span.0, span.1)),
            label: role.into(),
        }
    }

    #[test]
    fn eae_modern_vs_legacy_when_one_event_is_missed() {
        let gold = eae_fixture();
        let a = Anchor { trigger: Span::new(0, 1), event_type: "A".into() };
        let context = TriggerContext::predicted("ed", [("d".to_string(), a.trigger, a.event_type.clone())]);
        let preds = [arg_pred(&a, (1, 2), "R1"), arg_pred(&a, (2, 4), "R2")];
        let modern = score_eae(&gold, &preds, &context, EvalMode::Pipeline, Convention::Modern, EaeMatch::ByEventType).unwrap();
        assert_eq!(modern.counts, ConfusionCounts::new(2, 0, 2));
        assert_eq!(modern.recall, 0.5);
        let legacy = score_eae(&gold, &preds, &context, EvalMode::Pipeline, Convention::Legacy, EaeMatch::ByEventType).unwrap();
        assert_eq!(legacy.counts, ConfusionCounts::new(2, 0, 0));
        assert_eq!(legacy.recall, 1.0);
    }

    #[test]
    fn eae_wrong_role_is_fp_and_fn() {
        let gold = eae_fixture();
        let context = TriggerContext::gold(&gold);
        let a = Anchor { trigger: Span::new(0, 1), event_type: "A".into() };
        let r = score_eae(
            &gold,
            &[arg_pred(&a, (1, 2), "R2")],
            &context,
            EvalMode::GoldTrigger,
            Convention::Modern,
            EaeMatch::ByEventType,
        )
        .unwrap();
        assert_eq!(r.counts, ConfusionCounts::new(0, 1, 4));
        assert_eq!(r.identification.counts, ConfusionCounts::new(1, 0, 3));
    }

    #[test]
    fn eae_anchor_must_be_in_context() {
        let gold = eae_fixture();
        let context = TriggerContext::gold(&gold);
        let stray = Anchor { trigger: Span::new(3, 4), event_type: "A".into() };
        assert!(matches!(
            score_eae(&gold, &[arg_pred(&stray, (1, 2), "R1")], &context, EvalMode::GoldTrigger, Convention::Modern, EaeMatch::ByEventType),
            Err(MetricsError::AnchorNotInContext { .. })
        ));
    }

    #[test]
    fn eae_match_by_trigger_span_requires_the_right_event() {
        let mut gold = eae_fixture();
        gold.documents[0].events[1].event_type = "A".into();
        let context = TriggerContext::gold(&gold);
        let first = Anchor { trigger: Span::new(0, 1), event_type: "A".into() };
        // Argument of the second A event predicted under the first A anchor.
        let preds = [arg_pred(&first, (6, 7), "R1")];
        let by_type = score_eae(&gold, &preds, &context, EvalMode::GoldTrigger, Convention::Modern, EaeMatch::ByEventType).unwrap();
        assert_eq!(by_type.counts.tp, 1);
        let by_span = score_eae(&gold, &preds, &context, EvalMode::GoldTrigger, Convention::Modern, EaeMatch::ByTriggerSpan).unwrap();
        assert_eq!(by_span.counts, ConfusionCounts::new(0, 1, 4));
    }

    #[test]
    fn report_serializes_six_decimals() {
        let gold = Corpus::new(vec![doc("d", vec![("A", Span::new(1, 2))])]);
        let r = score_ed(&gold, &[pred("d", (1, 2), "A")], EvalMode::GoldTrigger, Convention::Modern).unwrap();
        let json = r.to_json();
        assert!(json.contains(r#""precision":1.000000,"recall":1.000000,"f1":1.000000"#), "{json}");
        assert!(json.contains(r#""counts":{"tp":1,"fp":0,"fn":0}"#), "{json}");
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
