//! Preprocessing variants and dataset statistics.
//!
//! A [`VariantConfig`] captures the inclusion/exclusion choices that differ
//! between preprocessing scripts (multi-token triggers, which mention kinds
//! count as argument candidates, head vs. full mention spans). Applying one
//! yields a new corpus plus a [`TransformReport`] counting what was changed.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Corpus, Document, MentionKind};
use crate::standardize::{build_candidates, CandidatePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionMode {
    Head,
    Full,
}

/// What to do with an event whose trigger spans more than one token when
/// multi-token triggers are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiTokenPolicy {
    /// Shrink the trigger to its first token.
    #[default]
    FirstToken,
    DropEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariantConfig {
    pub multi_token_triggers: bool,
    pub include_time: bool,
    pub include_value: bool,
    pub include_pronoun: bool,
    pub entity_mention_mode: MentionMode,
    pub multi_token_policy: MultiTokenPolicy,
}

impl Default for VariantConfig {
    /// The identity variant: everything kept, full mention spans.
    fn default() -> Self {
        VariantConfig {
            multi_token_triggers: true,
            include_time: true,
            include_value: true,
            include_pronoun: true,
            entity_mention_mode: MentionMode::Full,
            multi_token_policy: MultiTokenPolicy::FirstToken,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VariantParseError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} set twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value {value:?} for {key}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
    },
}

const KEYS: [&str; 6] = [
    "multi_token_triggers",
    "include_time",
    "include_value",
    "include_pronoun",
    "entity_mention_mode",
    "multi_token_policy",
];

impl VariantConfig {
    pub fn is_identity(&self) -> bool {
        self.multi_token_triggers
            && self.include_time
            && self.include_value
            && self.include_pronoun
            && self.entity_mention_mode == MentionMode::Full
    }

    fn includes(&self, kind: MentionKind) -> bool {
        match kind {
            MentionKind::Entity => true,
            MentionKind::Time => self.include_time,
            MentionKind::Value => self.include_value,
            MentionKind::Pronoun => self.include_pronoun,
        }
    }

    /// Parses the flat `key = value` format. `#` starts a comment; keys left
    /// out keep their [`Default`] value.
    pub fn parse(text: &str) -> Result<Self, VariantParseError> {
        let mut cfg = VariantConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or(VariantParseError::Syntax { line })?;
            if !KEYS.contains(&key) {
                return Err(VariantParseError::UnknownKey { line, key: key.into() });
            }
            if !seen.insert(key.to_owned()) {
                return Err(VariantParseError::DuplicateKey { line, key: key.into() });
            }
            let invalid = || VariantParseError::InvalidValue {
                line,
                key: key.into(),
                value: value.into(),
            };
            let flag = || match value {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(invalid()),
            };
            match key {
                "multi_token_triggers" => cfg.multi_token_triggers = flag()?,
                "include_time" => cfg.include_time = flag()?,
                "include_value" => cfg.include_value = flag()?,
                "include_pronoun" => cfg.include_pronoun = flag()?,
                "entity_mention_mode" => {
                    cfg.entity_mention_mode = match value {
                        "head" => MentionMode::Head,
                        "full" => MentionMode::Full,
                        _ => return Err(invalid()),
                    }
                }
                "multi_token_policy" => cfg.multi_token_policy = value.parse().map_err(|_| invalid())?,
                _ => unreachable!("key checked against KEYS"),
            }
        }
        Ok(cfg)
    }

    /// Canonical text form: all six keys in a fixed order.
    pub fn to_config_text(&self) -> String {
        let mode = match self.entity_mention_mode {
            MentionMode::Head => "head",
            MentionMode::Full => "full",
        };
        format!(
            "multi_token_triggers = {}\ninclude_time = {}\ninclude_value = {}\ninclude_pronoun = {}\nentity_mention_mode = {}\nmulti_token_policy = {}\n",
            self.multi_token_triggers,
            self.include_time,
            self.include_value,
            self.include_pronoun,
            mode,
            self.multi_token_policy,
        )
    }

    /// Binds this configuration to a corpus content hash.
    pub fn fingerprint(&self, corpus_hash: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"variant\n");
        hasher.update(self.to_config_text().as_bytes());
        hasher.update(b"corpus\n");
        hasher.update(corpus_hash.as_bytes());
        hex::encode(hasher.finalize())
    }
}

impl fmt::Display for MultiTokenPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MultiTokenPolicy::FirstToken => "first_token",
            MultiTokenPolicy::DropEvent => "drop_event",
        })
    }
}

impl FromStr for MultiTokenPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "first_token" => Ok(MultiTokenPolicy::FirstToken),
            "drop_event" => Ok(MultiTokenPolicy::DropEvent),
            _ => Err(format!("unknown multi-token policy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformReport {
    pub removed_arguments: usize,
    pub reduced_triggers: usize,
    pub removed_mentions: usize,
    pub dropped_events: usize,
}

impl std::ops::AddAssign for TransformReport {
    fn add_assign(&mut self, rhs: Self) {
        self.removed_arguments += rhs.removed_arguments;
        self.reduced_triggers += rhs.reduced_triggers;
        self.removed_mentions += rhs.removed_mentions;
        self.dropped_events += rhs.dropped_events;
    }
}

fn apply_to_document(doc: &Document, cfg: &VariantConfig) -> (Document, TransformReport) {
    let mut report = TransformReport::default();
    let mut out = doc.clone();

    let before = out.entities.len();
    out.entities.retain(|m| cfg.includes(m.kind));
    report.removed_mentions = before - out.entities.len();
    if cfg.entity_mention_mode == MentionMode::Head {
        for m in &mut out.entities {
            m.span = m.head_span;
        }
    }
    let kept: HashSet<&str> = out.entities.iter().map(|m| m.id.as_str()).collect();

    let mut events = Vec::with_capacity(out.events.len());
    for mut ev in std::mem::take(&mut out.events) {
        if !cfg.multi_token_triggers && ev.trigger.len() > 1 {
            match cfg.multi_token_policy {
                MultiTokenPolicy::FirstToken => {
                    ev.trigger.end = ev.trigger.start + 1;
                    report.reduced_triggers += 1;
                }
                MultiTokenPolicy::DropEvent => {
                    report.dropped_events += 1;
                    report.removed_arguments += ev.arguments.len();
                    continue;
                }
            }
        }
        let before = ev.arguments.len();
        ev.arguments.retain(|a| kept.contains(a.entity_id.as_str()));
        report.removed_arguments += before - ev.arguments.len();
        events.push(ev);
    }
    out.events = events;
    (out, report)
}

/// Applies a preprocessing variant. Events left without arguments are kept.
pub fn apply_variant(corpus: &Corpus, cfg: &VariantConfig) -> (Corpus, TransformReport) {
    use rayon::prelude::*;
    let results: Vec<(Document, TransformReport)> = corpus
        .documents
        .par_iter()
        .map(|d| apply_to_document(d, cfg))
        .collect();
    let mut report = TransformReport::default();
    let mut documents = Vec::with_capacity(results.len());
    for (doc, r) in results {
        report += r;
        documents.push(doc);
    }
    (Corpus::new(documents), report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub token_count: usize,
    pub trigger_count: usize,
    pub argument_count: usize,
    pub event_type_count: usize,
    pub role_count: usize,
    pub trigger_candidate_count: usize,
    pub argument_candidate_count: usize,
}

/// Counts are over the corpus as given; apply the variant first to get the
/// statistics of a preprocessed dataset. Role and type counts are distinct
/// labels in use, not a declared schema.
pub fn compute_stats(corpus: &Corpus, policy: &CandidatePolicy) -> DatasetStats {
    let mut stats = DatasetStats::default();
    let mut types = BTreeSet::new();
    let mut roles = BTreeSet::new();
    for doc in &corpus.documents {
        stats.token_count += doc.token_count();
        stats.trigger_count += doc.events.len();
        for ev in &doc.events {
            types.insert(ev.event_type.as_str());
            stats.argument_count += ev.arguments.len();
            roles.extend(ev.arguments.iter().map(|a| a.role.as_str()));
        }
        stats.trigger_candidate_count += build_candidates(doc, None, policy).len();
        stats.argument_candidate_count += doc.entities.len();
    }
    stats.event_type_count = types.len();
    stats.role_count = roles.len();
    stats
}

/// The stats output file: dataset statistics plus the transformation deltas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsFile {
    #[serde(flatten)]
    pub stats: DatasetStats,
    pub removed_arguments: usize,
    pub reduced_triggers: usize,
}
