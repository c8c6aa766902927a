//! File-backed store of off-the-shelf predicted triggers.
//!
//! Layout: `manifest.json` (an array of [`ManifestEntry`]) plus, per entry,
//! a trigger file and the ED report computed when it was added. Entries are
//! keyed by `(corpus id, variant fingerprint, producer)` and never change
//! once written. All writes go to a temporary file in the store directory
//! and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TriggerFile;
use crate::ingest::IngestError;
use crate::metrics::{score_ed, Convention, EvalMode, EvalReport, MetricsError};
use crate::model::Corpus;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path}: {source}")]
    Malformed {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("integrity error: an entry for producer {producer} and fingerprint {fingerprint} already exists with different content")]
    Integrity { producer: String, fingerprint: String },
    #[error("several producers stored triggers for fingerprint {fingerprint}: {producers}; pick one")]
    Ambiguous { fingerprint: String, producers: String },
    #[error("stored trigger file {path}: {source}")]
    Triggers {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub corpus_id: String,
    pub fingerprint: String,
    pub producer: String,
    pub file: String,
    pub ed_f1: f64,
}

/// Predicted triggers for one corpus variant, with the ED report this
/// toolkit computed for them.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerStoreEntry {
    corpus_id: String,
    fingerprint: String,
    producer: String,
    file: String,
    triggers: TriggerFile,
    ed_report: EvalReport,
}

fn file_stem(producer: &str, fingerprint: &str) -> String {
    let safe: String = producer
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    let short = &fingerprint[..fingerprint.len().min(16)];
    format!("{safe}-{short}")
}

impl TriggerStoreEntry {
    /// Builds an entry, scoring `triggers` against `gold`, the corpus after
    /// the variant identified by `fingerprint` was applied.
    pub fn new(
        corpus_id: &str,
        fingerprint: &str,
        producer: &str,
        triggers: TriggerFile,
        gold: &Corpus,
    ) -> Result<Self, StoreError> {
        triggers.validate(gold).map_err(|source| StoreError::Triggers {
            path: PathBuf::from("<input>"),
            source,
        })?;
        let ed_report = score_ed(gold, &triggers.predictions(), EvalMode::Pipeline, Convention::Modern)?;
        Ok(TriggerStoreEntry {
            corpus_id: corpus_id.into(),
            fingerprint: fingerprint.into(),
            producer: producer.into(),
            file: format!("{}.jsonl", file_stem(producer, fingerprint)),
            triggers,
            ed_report,
        })
    }

    pub fn corpus_id(&self) -> &str {
        &self.corpus_id
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn producer(&self) -> &str {
        &self.producer
    }

    pub fn file(&self) -> &str {
        &self.file
    }

    pub fn triggers(&self) -> &TriggerFile {
        &self.triggers
    }

    pub fn ed_report(&self) -> &EvalReport {
        &self.ed_report
    }

    fn report_file(&self) -> String {
        format!("{}.report.json", self.file.trim_end_matches(".jsonl"))
    }

    fn manifest_entry(&self) -> ManifestEntry {
        ManifestEntry {
            corpus_id: self.corpus_id.clone(),
            fingerprint: self.fingerprint.clone(),
            producer: self.producer.clone(),
            file: self.file.clone(),
            ed_f1: (self.ed_report.f1 * 1e6).round() / 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Created,
    /// The identical entry was already stored.
    Unchanged,
}

#[derive(Debug, Clone)]
pub struct TriggerStore {
    root: PathBuf,
}

impl TriggerStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| StoreError::Io { path: root.clone(), source })?;
        Ok(TriggerStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn list(&self) -> Result<Vec<ManifestEntry>, StoreError> {
        let path = self.root.join(MANIFEST);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|source| StoreError::Malformed { path, source }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(source) => Err(StoreError::Io { path, source }),
        }
    }

    fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
        let path = self.root.join(name);
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn put(&self, entry: &TriggerStoreEntry) -> Result<PutOutcome, StoreError> {
        let mut manifest = self.list()?;
        let body = entry.triggers.to_jsonl();
        if let Some(existing) = manifest
            .iter()
            .find(|m| m.producer == entry.producer && m.fingerprint == entry.fingerprint)
        {
            let path = self.root.join(&existing.file);
            let stored = fs::read(&path).map_err(|source| StoreError::Io { path, source })?;
            if existing.corpus_id == entry.corpus_id && stored == body.as_bytes() {
                return Ok(PutOutcome::Unchanged);
            }
            return Err(StoreError::Integrity {
                producer: entry.producer.clone(),
                fingerprint: entry.fingerprint.clone(),
            });
        }
        self.write_atomic(&entry.file, body.as_bytes())?;
        let report = serde_json::to_string_pretty(&entry.ed_report).expect("reports always serialize");
        self.write_atomic(&entry.report_file(), format!("{report}\n").as_bytes())?;
        manifest.push(entry.manifest_entry());
        let text = serde_json::to_string_pretty(&manifest).expect("manifest always serializes");
        self.write_atomic(MANIFEST, format!("{text}\n").as_bytes())?;
        Ok(PutOutcome::Created)
    }

    /// Looks up the entry for a corpus variant. `Ok(None)` when nothing
    /// matches, including when the corpus changed since the entry was made.
    pub fn get(
        &self,
        corpus_id: &str,
        fingerprint: &str,
        producer: Option<&str>,
    ) -> Result<Option<TriggerStoreEntry>, StoreError> {
        let manifest = self.list()?;
        let hits: Vec<&ManifestEntry> = manifest
            .iter()
            .filter(|m| m.corpus_id == corpus_id && m.fingerprint == fingerprint)
            .filter(|m| producer.is_none_or(|p| m.producer == p))
            .collect();
        let hit = match hits.as_slice() {
            [] => return Ok(None),
            [one] => *one,
            many => {
                return Err(StoreError::Ambiguous {
                    fingerprint: fingerprint.into(),
                    producers: many.iter().map(|m| m.producer.as_str()).collect::<Vec<_>>().join(", "),
                })
            }
        };
        let path = self.root.join(&hit.file);
        let bytes = fs::read(&path).map_err(|source| StoreError::Io { path: path.clone(), source })?;
        let triggers = TriggerFile::parse(&bytes[..]).map_err(|source| StoreError::Triggers { path: path.clone(), source })?;
        let report_path = self.root.join(format!("{}.report.json", hit.file.trim_end_matches(".jsonl")));
        let report = fs::read(&report_path).map_err(|source| StoreError::Io { path: report_path.clone(), source })?;
        let ed_report = serde_json::from_slice(&report).map_err(|source| StoreError::Malformed { path: report_path, source })?;
        Ok(Some(TriggerStoreEntry {
            corpus_id: hit.corpus_id.clone(),
            fingerprint: hit.fingerprint.clone(),
            producer: hit.producer.clone(),
            file: hit.file.clone(),
            triggers,
            ed_report,
        }))
    }
}
