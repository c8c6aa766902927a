//! Corpus and prediction file parsing.
//!
//! Every file is JSON Lines: one record per line, UTF-8. Blank lines are
//! skipped but still counted, so error locators always point at the physical
//! line in the file.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{validate_document, Anchor, Corpus, Document, Span, SpanRule, Task, Violation};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: input is not valid UTF-8")]
    Encoding { line: usize },
    #[error("line {line}: malformed record: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: duplicate document id {id}")]
    DuplicateDocument { line: usize, id: String },
    #[error("line {line}: document {doc_id} failed validation: {}", join(.violations))]
    InvalidDocument {
        line: usize,
        doc_id: String,
        violations: Vec<Violation>,
    },
    #[error("line {line}: unknown doc_id {doc_id}")]
    UnknownDocument { line: usize, doc_id: String },
    #[error("line {line}: doc {doc_id}: {found} tags for {expected} tokens")]
    LengthMismatch {
        line: usize,
        doc_id: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: doc {doc_id}: malformed tag {tag:?} at position {index}")]
    MalformedTag {
        line: usize,
        doc_id: String,
        index: usize,
        tag: String,
    },
    #[error("line {line}: doc {doc_id}: {field} {span} breaks {rule} ({token_count} tokens)")]
    OutOfBounds {
        line: usize,
        doc_id: String,
        field: String,
        span: Span,
        rule: SpanRule,
        token_count: usize,
    },
    #[error("line {line}: doc {doc_id}: record mixes scored and unscored predictions")]
    MixedConfidence { line: usize, doc_id: String },
    #[error("line {line}: doc {doc_id}: {field} confidence {value} outside [0, 1]")]
    ConfidenceRange {
        line: usize,
        doc_id: String,
        field: String,
        value: f64,
    },
    #[error("line {line}: expected exactly one `{expected}` payload, found {found}")]
    PayloadMismatch {
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error("line {line}: doc {doc_id}: argument record without anchor")]
    AnchorMissing { line: usize, doc_id: String },
    #[error("line {line}: doc {doc_id}: trigger record must not carry an anchor")]
    AnchorUnexpected { line: usize, doc_id: String },
    #[error("line {line}: doc {doc_id}: duplicate record for the same anchor (first at line {first_line})")]
    DuplicateRecord {
        line: usize,
        doc_id: String,
        first_line: usize,
    },
    #[error("line {line}: doc {doc_id}: candidate {candidate_id} assigned more than once")]
    DuplicateAssignment {
        line: usize,
        doc_id: String,
        candidate_id: String,
    },
    #[error("line {line}: doc {doc_id}: items[{index}] has an empty mention")]
    EmptyMention {
        line: usize,
        doc_id: String,
        index: usize,
    },
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Splits a JSONL stream into `(line number, text)` pairs, skipping blank
/// lines. Line numbers are 1-based.
pub(crate) fn jsonl_lines(mut reader: impl Read) -> Result<Vec<(usize, String)>, IngestError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut out = Vec::new();
    for (i, raw) in bytes.split(|b| *b == b'\n').enumerate() {
        let line = i + 1;
        let text = std::str::from_utf8(raw).map_err(|_| IngestError::Encoding { line })?;
        let text = text.strip_suffix('\r').unwrap_or(text);
        if text.trim().is_empty() {
            continue;
        }
        out.push((line, text.to_owned()));
    }
    Ok(out)
}

pub(crate) fn parse_line<T: for<'de> Deserialize<'de>>(line: usize, text: &str) -> Result<T, IngestError> {
    serde_json::from_str(text).map_err(|source| IngestError::Malformed { line, source })
}

/// Serializes `value` as one JSON line with object keys sorted and no
/// insignificant whitespace.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("in-memory records always serialize");
    serde_json::to_string(&value).expect("JSON values always serialize")
}

/// Reads and validates a corpus file.
pub fn parse_corpus(reader: impl Read) -> Result<Corpus, IngestError> {
    let mut documents: Vec<Document> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, text) in jsonl_lines(reader)? {
        let doc: Document = parse_line(line, &text)?;
        if seen.contains_key(&doc.id) {
            return Err(IngestError::DuplicateDocument { line, id: doc.id });
        }
        let violations = validate_document(&doc);
        if !violations.is_empty() {
            return Err(IngestError::InvalidDocument {
                line,
                doc_id: doc.id,
                violations,
            });
        }
        seen.insert(doc.id.clone(), line);
        documents.push(doc);
    }
    Ok(Corpus::new(documents))
}

pub fn write_corpus(corpus: &Corpus, mut writer: impl Write) -> io::Result<()> {
    for doc in &corpus.documents {
        writeln!(writer, "{}", canonical_json(doc))?;
    }
    Ok(())
}

/// SHA-256 over the canonical serialization of the corpus, hex encoded.
pub fn corpus_hash(corpus: &Corpus) -> String {
    let mut hasher = Sha256::new();
    for doc in &corpus.documents {
        hasher.update(canonical_json(doc).as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Cls,
    Sl,
    Sp,
    Cg,
}

impl Paradigm {
    /// Name of the payload field this paradigm's records carry.
    pub fn payload_key(self) -> &'static str {
        match self {
            Paradigm::Cls => "assignments",
            Paradigm::Sl => "tags",
            Paradigm::Sp => "spans",
            Paradigm::Cg => "items",
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Cls => "cls",
            Paradigm::Sl => "sl",
            Paradigm::Sp => "sp",
            Paradigm::Cg => "cg",
        })
    }
}

impl FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cls" => Ok(Paradigm::Cls),
            "sl" => Ok(Paradigm::Sl),
            "sp" => Ok(Paradigm::Sp),
            "cg" => Ok(Paradigm::Cg),
            _ => Err(format!("unknown paradigm {s:?} (expected cls, sl, sp or cg)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub candidate_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// One sequence-labeling tag: `O`, `B-<label>` or `I-<label>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BioTag {
    Outside,
    Begin(String),
    Inside(String),
}

impl FromStr for BioTag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioTag::Outside);
        }
        match s.split_at_checked(2) {
            Some(("B-", label)) if !label.is_empty() => Ok(BioTag::Begin(label.to_owned())),
            Some(("I-", label)) if !label.is_empty() => Ok(BioTag::Inside(label.to_owned())),
            _ => Err(()),
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::Outside => f.write_str("O"),
            BioTag::Begin(l) => write!(f, "B-{l}"),
            BioTag::Inside(l) => write!(f, "I-{l}"),
        }
    }
}

impl Serialize for BioTag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanPrediction {
    pub span: Span,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedItem {
    pub mention: Vec<String>,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Payload {
    #[serde(rename = "assignments")]
    Assignments(Vec<Assignment>),
    #[serde(rename = "tags")]
    Tags(Vec<BioTag>),
    #[serde(rename = "spans")]
    Spans(Vec<SpanPrediction>),
    #[serde(rename = "items")]
    Items(Vec<GeneratedItem>),
}

impl Payload {
    pub fn paradigm(&self) -> Paradigm {
        match self {
            Payload::Assignments(_) => Paradigm::Cls,
            Payload::Tags(_) => Paradigm::Sl,
            Payload::Spans(_) => Paradigm::Sp,
            Payload::Items(_) => Paradigm::Cg,
        }
    }
}

/// Predictions for one `(document, anchor)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    /// Physical line in the source file; 0 for records built in memory.
    #[serde(skip)]
    pub line: usize,
    pub doc_id: String,
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Anchor>,
    #[serde(flatten)]
    pub payload: Payload,
}

impl PredictionRecord {
    pub fn to_json_line(&self) -> String {
        canonical_json(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub paradigm: Paradigm,
    pub records: Vec<PredictionRecord>,
}

impl PredictionFile {
    pub fn write(&self, mut writer: impl Write) -> io::Result<()> {
        for r in &self.records {
            writeln!(writer, "{}", r.to_json_line())?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    doc_id: String,
    task: Task,
    #[serde(default)]
    anchor: Option<Anchor>,
    #[serde(default)]
    assignments: Option<Vec<Assignment>>,
    #[serde(default)]
    tags: Option<Vec<String>>,
    #[serde(default)]
    spans: Option<Vec<SpanPrediction>>,
    #[serde(default)]
    items: Option<Vec<GeneratedItem>>,
}

/// Parses a prediction file of the given paradigm, cross-checking every
/// record against the document it names.
pub fn parse_predictions(
    reader: impl Read,
    paradigm: Paradigm,
    corpus: &Corpus,
) -> Result<PredictionFile, IngestError> {
    let docs: HashMap<&str, &Document> = corpus.documents.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut seen: HashMap<(String, Option<Anchor>), usize> = HashMap::new();
    let mut records = Vec::new();
    for (line, text) in jsonl_lines(reader)? {
        let raw: RawRecord = parse_line(line, &text)?;
        let doc = *docs.get(raw.doc_id.as_str()).ok_or_else(|| IngestError::UnknownDocument {
            line,
            doc_id: raw.doc_id.clone(),
        })?;
        let record = check_record(line, raw, paradigm, doc)?;
        let key = (record.doc_id.clone(), record.anchor.clone());
        if let Some(&first_line) = seen.get(&key) {
            return Err(IngestError::DuplicateRecord {
                line,
                doc_id: record.doc_id,
                first_line,
            });
        }
        seen.insert(key, line);
        records.push(record);
    }
    Ok(PredictionFile { paradigm, records })
}

fn check_record(
    line: usize,
    raw: RawRecord,
    paradigm: Paradigm,
    doc: &Document,
) -> Result<PredictionRecord, IngestError> {
    let doc_id = raw.doc_id;
    let n = doc.token_count();
    let bounds = |field: String, span: Span| -> Result<(), IngestError> {
        span.check(n).map_err(|rule| IngestError::OutOfBounds {
            line,
            doc_id: doc_id.clone(),
            field,
            span,
            rule,
            token_count: n,
        })
    };

    match (raw.task, &raw.anchor) {
        (Task::Argument, None) => {
            return Err(IngestError::AnchorMissing { line, doc_id });
        }
        (Task::Trigger, Some(_)) => {
            return Err(IngestError::AnchorUnexpected { line, doc_id });
        }
        (_, Some(anchor)) => bounds("anchor.trigger".into(), anchor.trigger)?,
        _ => {}
    }

    let present: Vec<&str> = [
        raw.assignments.as_ref().map(|_| "assignments"),
        raw.tags.as_ref().map(|_| "tags"),
        raw.spans.as_ref().map(|_| "spans"),
        raw.items.as_ref().map(|_| "items"),
    ]
    .into_iter()
    .flatten()
    .collect();
    if present != [paradigm.payload_key()] {
        return Err(IngestError::PayloadMismatch {
            line,
            expected: paradigm.payload_key(),
            found: if present.is_empty() {
                "none".into()
            } else {
                present.join(", ")
            },
        });
    }

    let check_confidences = |field: &str, confs: Vec<Option<f64>>| -> Result<(), IngestError> {
        let scored = confs.iter().filter(|c| c.is_some()).count();
        if scored != 0 && scored != confs.len() {
            return Err(IngestError::MixedConfidence {
                line,
                doc_id: doc_id.clone(),
            });
        }
        for (i, c) in confs.into_iter().enumerate() {
            if let Some(value) = c {
                if !(0.0..=1.0).contains(&value) {
                    return Err(IngestError::ConfidenceRange {
                        line,
                        doc_id: doc_id.clone(),
                        field: format!("{field}[{i}]"),
                        value,
                    });
                }
            }
        }
        Ok(())
    };

    let payload = match paradigm {
        Paradigm::Cls => {
            let assignments = raw.assignments.unwrap_or_default();
            let mut ids = HashSet::new();
            for a in &assignments {
                if !ids.insert(a.candidate_id.as_str()) {
                    return Err(IngestError::DuplicateAssignment {
                        line,
                        doc_id: doc_id.clone(),
                        candidate_id: a.candidate_id.clone(),
                    });
                }
            }
            check_confidences("assignments", assignments.iter().map(|a| a.confidence).collect())?;
            Payload::Assignments(assignments)
        }
        Paradigm::Sl => {
            let tags = raw.tags.unwrap_or_default();
            if tags.len() != n {
                return Err(IngestError::LengthMismatch {
                    line,
                    doc_id,
                    expected: n,
                    found: tags.len(),
                });
            }
            let parsed = tags
                .into_iter()
                .enumerate()
                .map(|(index, tag)| {
                    tag.parse::<BioTag>().map_err(|_| IngestError::MalformedTag {
                        line,
                        doc_id: doc_id.clone(),
                        index,
                        tag,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Payload::Tags(parsed)
        }
        Paradigm::Sp => {
            let spans = raw.spans.unwrap_or_default();
            for (i, s) in spans.iter().enumerate() {
                bounds(format!("spans[{i}].span"), s.span)?;
            }
            check_confidences("spans", spans.iter().map(|s| s.confidence).collect())?;
            Payload::Spans(spans)
        }
        Paradigm::Cg => {
            let items = raw.items.unwrap_or_default();
            if let Some(index) = items.iter().position(|it| it.mention.is_empty()) {
                return Err(IngestError::EmptyMention { line, doc_id, index });
            }
            check_confidences("items", items.iter().map(|it| it.confidence).collect())?;
            Payload::Items(items)
        }
    };

    Ok(PredictionRecord {
        line,
        doc_id,
        task: raw.task,
        anchor: raw.anchor,
        payload,
    })
}
