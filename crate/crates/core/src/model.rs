//! Shared data model: documents, spans, mentions, events, candidates and
//! labels, plus the structural validation every loaded document goes through.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Reserved label meaning "no event" / "no role".
pub const NIL_LABEL: &str = "NA";

/// Half-open token interval `[start, end)`.
///
/// Spans serialize as a two-element array `[start, end]`. Construction does
/// not check `start < end`; ill-formed spans are reported by
/// [`validate_document`] and by the prediction parsers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// `outer.start <= inner.start && inner.end <= outer.end`.
    pub fn contains(&self, inner: &Span) -> bool {
        self.start <= inner.start && inner.end <= self.end
    }

    /// `max(starts) < min(ends)`; adjacent spans do not overlap.
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }

    /// Token indices covered by the span.
    pub fn tokens(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    /// Checks the span against a document of `token_count` tokens, returning
    /// the first rule it breaks.
    pub fn check(&self, token_count: usize) -> Result<(), SpanRule> {
        if self.start >= self.end {
            Err(SpanRule::StartBeforeEnd)
        } else if self.end > token_count {
            Err(SpanRule::WithinTokens)
        } else {
            Ok(())
        }
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(span: Span) -> Self {
        [span.start, span.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

pub fn span_contains(outer: &Span, inner: &Span) -> bool {
    outer.contains(inner)
}

pub fn span_equal(a: &Span, b: &Span) -> bool {
    a == b
}

pub fn span_overlaps(a: &Span, b: &Span) -> bool {
    a.overlaps(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpanRule {
    StartBeforeEnd,
    WithinTokens,
}

impl fmt::Display for SpanRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpanRule::StartBeforeEnd => f.write_str("start < end"),
            SpanRule::WithinTokens => f.write_str("end <= token count"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Entity,
    Value,
    Time,
    Pronoun,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityMention {
    pub id: String,
    pub span: Span,
    pub head_span: Span,
    pub kind: MentionKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Argument {
    pub entity_id: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventAnnotation {
    pub id: String,
    #[serde(rename = "type")]
    pub event_type: String,
    pub trigger: Span,
    pub arguments: Vec<Argument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub sentences: Vec<Span>,
    pub entities: Vec<EntityMention>,
    pub events: Vec<EventAnnotation>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn entity(&self, id: &str) -> Option<&EntityMention> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// Index of the sentence containing `span`, if one contains it entirely.
    pub fn sentence_of(&self, span: &Span) -> Option<usize> {
        self.sentences.iter().position(|s| s.contains(span))
    }
}

/// Documents in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Self {
        Corpus { documents }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    /// Label schema made of the labels the corpus actually uses.
    pub fn label_schema(&self) -> LabelSchema {
        let mut event_types = BTreeSet::new();
        let mut roles = BTreeSet::new();
        for ev in self.documents.iter().flat_map(|d| &d.events) {
            event_types.insert(ev.event_type.clone());
            roles.extend(ev.arguments.iter().map(|a| a.role.clone()));
        }
        LabelSchema { event_types, roles }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Trigger,
    Argument,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Trigger => "trigger",
            Task::Argument => "argument",
        })
    }
}

/// The (trigger, event type) an argument prediction is conditioned on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub trigger: Span,
    pub event_type: String,
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.event_type, self.trigger)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub span: Span,
}

/// Pre-enumerated spans a classifier labels; the common output space.
///
/// Candidates are kept in canonical order: by `(span.start, span.end)`, then
/// by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub doc_id: String,
    pub task: Task,
    pub anchor: Option<Anchor>,
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(
        doc_id: impl Into<String>,
        task: Task,
        anchor: Option<Anchor>,
        mut candidates: Vec<Candidate>,
    ) -> Self {
        candidates.sort_by(|a, b| (a.span, &a.id).cmp(&(b.span, &b.id)));
        CandidateSet {
            doc_id: doc_id.into(),
            task,
            anchor,
            candidates,
        }
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }

    /// First candidate, in canonical order, whose span equals `span`.
    pub fn find_span(&self, span: &Span) -> Option<&Candidate> {
        let idx = self.candidates.partition_point(|c| c.span < *span);
        self.candidates.get(idx).filter(|c| c.span == *span)
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.get(id).is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSchema {
    pub event_types: BTreeSet<String>,
    pub roles: BTreeSet<String>,
}

impl LabelSchema {
    pub fn nil_label(&self) -> &'static str {
        NIL_LABEL
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.event_types.contains(NIL_LABEL) {
            return Err(format!("nil label {NIL_LABEL} used as an event type"));
        }
        if self.roles.contains(NIL_LABEL) {
            return Err(format!("nil label {NIL_LABEL} used as a role"));
        }
        Ok(())
    }
}

/// One broken invariant found by [`validate_document`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Violation {
    Span {
        path: String,
        rule: SpanRule,
    },
    SentencePartition {
        path: String,
        detail: String,
    },
    HeadOutsideMention {
        path: String,
    },
    DuplicateEntityId {
        id: String,
    },
    DuplicateEventId {
        id: String,
    },
    UnresolvedEntity {
        path: String,
        entity_id: String,
    },
    DuplicateArgument {
        path: String,
        entity_id: String,
        role: String,
    },
    TriggerCrossesSentence {
        path: String,
    },
    NilLabel {
        path: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Span { path, rule } => write!(f, "Span: {rule} violated at {path}"),
            Violation::SentencePartition { path, detail } => {
                write!(f, "sentences must partition the tokens: {detail} at {path}")
            }
            Violation::HeadOutsideMention { path } => {
                write!(f, "head_span not contained in span at {path}")
            }
            Violation::DuplicateEntityId { id } => write!(f, "duplicate entity id {id}"),
            Violation::DuplicateEventId { id } => write!(f, "duplicate event id {id}"),
            Violation::UnresolvedEntity { entity_id, .. } => {
                write!(f, "unresolved entity_id {entity_id}")
            }
            Violation::DuplicateArgument {
                path,
                entity_id,
                role,
            } => write!(f, "duplicate argument ({entity_id}, {role}) at {path}"),
            Violation::TriggerCrossesSentence { path } => {
                write!(f, "trigger crosses a sentence boundary at {path}")
            }
            Violation::NilLabel { path } => {
                write!(f, "reserved label {NIL_LABEL} used at {path}")
            }
        }
    }
}

/// Returns every broken Document/EntityMention/EventAnnotation invariant, in
/// a stable order (sentences, entities, events, each in input order).
pub fn validate_document(doc: &Document) -> Vec<Violation> {
    let n = doc.token_count();
    let mut out = Vec::new();

    let check_span = |out: &mut Vec<Violation>, span: &Span, path: String| -> bool {
        match span.check(n) {
            Ok(()) => true,
            Err(rule) => {
                out.push(Violation::Span { path, rule });
                false
            }
        }
    };

    let mut expected_start = 0;
    let mut sentences_ok = true;
    for (i, s) in doc.sentences.iter().enumerate() {
        let path = format!("sentences[{i}]");
        if !check_span(&mut out, s, path.clone()) {
            sentences_ok = false;
            continue;
        }
        if s.start != expected_start {
            out.push(Violation::SentencePartition {
                path,
                detail: format!("expected start {expected_start}, found {}", s.start),
            });
            sentences_ok = false;
        }
        expected_start = s.end;
    }
    if sentences_ok && expected_start != n {
        out.push(Violation::SentencePartition {
            path: "sentences".into(),
            detail: format!("covered {expected_start} of {n} tokens"),
        });
        sentences_ok = false;
    }

    let mut entity_ids = HashSet::new();
    for (i, e) in doc.entities.iter().enumerate() {
        let full = check_span(&mut out, &e.span, format!("entities[{i}].span"));
        let head = check_span(&mut out, &e.head_span, format!("entities[{i}].head_span"));
        if full && head && !e.span.contains(&e.head_span) {
            out.push(Violation::HeadOutsideMention {
                path: format!("entities[{i}]"),
            });
        }
        if !entity_ids.insert(e.id.as_str()) {
            out.push(Violation::DuplicateEntityId { id: e.id.clone() });
        }
    }

    let mut event_ids = HashSet::new();
    for (i, ev) in doc.events.iter().enumerate() {
        if !event_ids.insert(ev.id.as_str()) {
            out.push(Violation::DuplicateEventId { id: ev.id.clone() });
        }
        let path = format!("events[{i}].trigger");
        if check_span(&mut out, &ev.trigger, path.clone())
            && sentences_ok
            && doc.sentence_of(&ev.trigger).is_none()
        {
            out.push(Violation::TriggerCrossesSentence { path });
        }
        if ev.event_type == NIL_LABEL {
            out.push(Violation::NilLabel {
                path: format!("events[{i}].type"),
            });
        }
        let mut pairs = HashSet::new();
        for (j, arg) in ev.arguments.iter().enumerate() {
            let path = format!("events[{i}].arguments[{j}]");
            if !entity_ids.contains(arg.entity_id.as_str()) {
                out.push(Violation::UnresolvedEntity {
                    path: path.clone(),
                    entity_id: arg.entity_id.clone(),
                });
            }
            if arg.role == NIL_LABEL {
                out.push(Violation::NilLabel {
                    path: format!("{path}.role"),
                });
            }
            if !pairs.insert((arg.entity_id.as_str(), arg.role.as_str())) {
                out.push(Violation::DuplicateArgument {
                    path,
                    entity_id: arg.entity_id.clone(),
                    role: arg.role.clone(),
                });
            }
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(tokens: usize, sentences: Vec<Span>) -> Document {
        Document {
            id: "d".into(),
            tokens: (0..tokens).map(|i| format!("w{i}")).collect(),
            sentences,
            entities: vec![],
            events: vec![],
        }
    }

    fn mention(id: &str, span: Span) -> EntityMention {
        EntityMention {
            id: id.into(),
            span,
            head_span: span,
            kind: MentionKind::Entity,
        }
    }

    #[test]
    fn empty_trigger_span_is_reported() {
        let mut d = doc(7, vec![Span::new(0, 7)]);
        d.events.push(EventAnnotation {
            id: "ev0".into(),
            event_type: "Attack".into(),
            trigger: Span::new(5, 5),
            arguments: vec![],
        });
        let v: Vec<String> = validate_document(&d).iter().map(|v| v.to_string()).collect();
        assert_eq!(v, ["Span: start < end violated at events[0].trigger"]);
    }

    #[test]
    fn well_formed_document_has_no_violations() {
        let mut d = doc(7, vec![Span::new(0, 3), Span::new(3, 7)]);
        d.entities.push(mention("e1", Span::new(0, 2)));
        d.events.push(EventAnnotation {
            id: "ev0".into(),
            event_type: "Attack".into(),
            trigger: Span::new(4, 5),
            arguments: vec![Argument {
                entity_id: "e1".into(),
                role: "Attacker".into(),
            }],
        });
        assert!(validate_document(&d).is_empty());
    }

    #[test]
    fn unresolved_entity_is_reported() {
        let mut d = doc(7, vec![Span::new(0, 7)]);
        d.events.push(EventAnnotation {
            id: "ev0".into(),
            event_type: "Attack".into(),
            trigger: Span::new(4, 5),
            arguments: vec![Argument {
                entity_id: "e9".into(),
                role: "Target".into(),
            }],
        });
        let v: Vec<String> = validate_document(&d).iter().map(|v| v.to_string()).collect();
        assert_eq!(v, ["unresolved entity_id e9"]);
    }

    #[test]
    fn sentence_gaps_and_short_cover_are_reported() {
        let d = doc(7, vec![Span::new(0, 3), Span::new(4, 7)]);
        assert!(matches!(
            validate_document(&d).as_slice(),
            [Violation::SentencePartition { .. }]
        ));
        let d = doc(7, vec![Span::new(0, 5)]);
        assert!(matches!(
            validate_document(&d).as_slice(),
            [Violation::SentencePartition { .. }]
        ));
        assert!(validate_document(&doc(0, vec![])).is_empty());
    }

    #[test]
    fn head_outside_mention_and_duplicate_ids() {
        let mut d = doc(5, vec![Span::new(0, 5)]);
        d.entities.push(EntityMention {
            id: "e1".into(),
            span: Span::new(0, 2),
            head_span: Span::new(1, 3),
            kind: MentionKind::Entity,
        });
        d.entities.push(mention("e1", Span::new(3, 4)));
        let v = validate_document(&d);
        assert_eq!(
            v,
            vec![
                Violation::HeadOutsideMention {
                    path: "entities[0]".into()
                },
                Violation::DuplicateEntityId { id: "e1".into() },
            ]
        );
    }

    #[test]
    fn cross_sentence_trigger_and_duplicate_argument() {
        let mut d = doc(6, vec![Span::new(0, 3), Span::new(3, 6)]);
        d.entities.push(mention("e1", Span::new(0, 1)));
        let arg = Argument {
            entity_id: "e1".into(),
            role: "Agent".into(),
        };
        d.events.push(EventAnnotation {
            id: "ev0".into(),
            event_type: "Meet".into(),
            trigger: Span::new(2, 4),
            arguments: vec![arg.clone(), arg],
        });
        let v = validate_document(&d);
        assert!(matches!(v[0], Violation::TriggerCrossesSentence { .. }));
        assert!(matches!(v[1], Violation::DuplicateArgument { .. }));
    }

    #[test]
    fn span_predicates() {
        assert!(span_contains(&Span::new(2, 6), &Span::new(3, 5)));
        assert!(span_equal(&Span::new(3, 5), &Span::new(3, 5)));
        assert!(!span_equal(&Span::new(3, 5), &Span::new(3, 6)));
        assert!(!span_overlaps(&Span::new(0, 2), &Span::new(2, 4)));
        assert!(span_overlaps(&Span::new(0, 3), &Span::new(2, 4)));
    }

    #[test]
    fn candidate_set_is_canonically_ordered() {
        let set = CandidateSet::new(
            "d",
            Task::Argument,
            None,
            vec![
                Candidate { id: "b".into(), span: Span::new(1, 2) },
                Candidate { id: "a".into(), span: Span::new(1, 2) },
                Candidate { id: "c".into(), span: Span::new(0, 3) },
            ],
        );
        let ids: Vec<_> = set.candidates().iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(set.find_span(&Span::new(1, 2)).unwrap().id, "a");
        assert!(set.find_span(&Span::new(1, 3)).is_none());
    }

    #[test]
    fn span_serializes_as_pair() {
        let s: Span = serde_json::from_str("[3,5]").unwrap();
        assert_eq!(s, Span::new(3, 5));
        assert_eq!(serde_json::to_string(&s).unwrap(), "[3,5]");
    }

    #[test]
    fn schema_rejects_nil_label() {
        let mut schema = LabelSchema::default();
        schema.roles.insert(NIL_LABEL.into());
        assert!(schema.validate().is_err());
    }
}
