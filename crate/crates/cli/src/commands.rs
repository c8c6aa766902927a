use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use eeval::ingest::corpus_hash;
use eeval::metrics::EvalTask;
use eeval::pipeline::{evaluate_ed, PutOutcome, TriggerStoreEntry};
use eeval::standardize::{prepare_records, Discard, ScoredRecord, StandardizeOptions};
use eeval::variants::{StatsFile, TransformReport};
use eeval::{
    apply_variant, compute_stats, evaluate, parse_corpus, parse_predictions, Anchor, CandidatePolicy, Corpus, EvalMode,
    EvalOptions, EvalReport, Paradigm, PredictionFile, Task, TriggerFile, TriggerInput, TriggerStore, VariantConfig,
};
use serde::Serialize;

use crate::args::{CompareArgs, CorpusArgs, ScoreArgs, StandardizeArgs, StatsArgs, StoreGetArgs, StoreListArgs, StorePutArgs};
use crate::report::{delta_table, score_table, ReportHeader, RunConfig, RunReport};
use crate::{Failure, Outcome};

fn read(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Outcome<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let fail = |e: &dyn std::fmt::Display| Failure::eval(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

fn emit(output: Option<&Path>, text: &str) -> Outcome<()> {
    match output {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::eval(format!("cannot write to stdout: {e}"))),
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn init_threads(jobs: Option<usize>) -> Outcome<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::config("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::eval(format!("cannot start {n} worker threads: {e}")))?;
    }
    Ok(())
}

/// A corpus after its variant has been applied.
struct Loaded {
    variant: VariantConfig,
    raw_hash: String,
    fingerprint: String,
    corpus: Corpus,
    transform: TransformReport,
    policy: CandidatePolicy,
}

fn load(args: &CorpusArgs) -> Outcome<Loaded> {
    init_threads(args.jobs)?;
    let mut variant = match &args.variant {
        Some(path) => {
            let text = String::from_utf8(read(path)?)
                .map_err(|_| Failure::config(format!("{}: not valid UTF-8", path.display())))?;
            VariantConfig::parse(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        }
        None => VariantConfig::default(),
    };
    if let Some(policy) = args.multi_token_policy {
        variant.multi_token_policy = policy;
    }
    let bytes = read(&args.corpus)?;
    let raw = parse_corpus(bytes.as_slice()).map_err(|e| Failure::config(format!("{}: {e}", args.corpus.display())))?;
    let raw_hash = corpus_hash(&raw);
    let fingerprint = variant.fingerprint(&raw_hash);
    let (corpus, transform) = apply_variant(&raw, &variant);
    Ok(Loaded { variant, raw_hash, fingerprint, corpus, transform, policy: CandidatePolicy { trigger: args.candidate_policy } })
}

fn load_predictions(path: &Path, paradigm: Paradigm, corpus: &Corpus) -> Outcome<PredictionFile> {
    let bytes = read(path)?;
    parse_predictions(bytes.as_slice(), paradigm, corpus).map_err(|e| Failure::eval(format!("{}: {e}", path.display())))
}

fn load_triggers(path: &Path) -> Outcome<TriggerFile> {
    let bytes = read(path)?;
    TriggerFile::parse(bytes.as_slice()).map_err(|e| Failure::eval(format!("{}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs always serialize");
    s.push('\n');
    s
}

pub fn stats(args: &StatsArgs) -> Outcome<()> {
    let loaded = load(&args.corpus)?;
    let file = StatsFile {
        stats: compute_stats(&loaded.corpus, &loaded.policy),
        removed_arguments: loaded.transform.removed_arguments,
        reduced_triggers: loaded.transform.reduced_triggers,
    };
    emit(args.output.as_deref(), &pretty(&file))
}

#[derive(Serialize)]
struct DiscardLine<'a> {
    doc_id: &'a str,
    task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    anchor: Option<&'a Anchor>,
    #[serde(flatten)]
    discard: &'a Discard,
}

fn discard_ledger(records: &[&ScoredRecord]) -> String {
    let mut out = String::new();
    for r in records {
        if let ScoredRecord::Standardized(s) = r {
            for d in &s.discarded {
                let line = DiscardLine { doc_id: &s.doc_id, task: s.task, anchor: s.anchor.as_ref(), discard: d };
                out.push_str(&serde_json::to_string(&line).expect("discards always serialize"));
                out.push('\n');
            }
        }
    }
    out
}

pub fn score(args: &ScoreArgs) -> Outcome<()> {
    args.check().map_err(Failure::config)?;
    let loaded = load(&args.corpus)?;
    let corpus = &loaded.corpus;

    let predictions = load_predictions(&args.predictions, args.paradigm, corpus)?;
    let ed_predictions = match (&args.ed_predictions, args.ed_paradigm) {
        (Some(path), Some(paradigm)) => Some(load_predictions(path, paradigm, corpus)?),
        _ => None,
    };
    let (trigger_id, trigger_file) = if let Some(path) = &args.triggers {
        (display(path), Some(load_triggers(path)?))
    } else if let Some(root) = &args.store {
        let store = TriggerStore::open(root).map_err(Failure::config)?;
        let corpus_id = args.corpus_id.as_deref().expect("clap requires --corpus-id with --store");
        let entry = store
            .get(corpus_id, &loaded.fingerprint, args.producer.as_deref())
            .map_err(Failure::eval)?
            .ok_or_else(|| {
                Failure::config(format!(
                    "no stored triggers for corpus {corpus_id} under fingerprint {}; the corpus or variant differs from the one the triggers were made for",
                    loaded.fingerprint
                ))
            })?;
        (format!("{}:{}", entry.producer(), entry.file()), Some(entry.triggers().clone()))
    } else {
        (String::new(), None)
    };

    let opts = EvalOptions {
        policy: loaded.policy,
        standardize: args.standardize,
        standardize_options: StandardizeOptions { stray_i: args.stray_i },
        convention: args.convention,
        eae_match: args.eae_match,
    };

    let mut reports: BTreeMap<EvalTask, EvalReport> = BTreeMap::new();
    let scored: Vec<ScoredRecord>;
    match args.task {
        Task::Trigger => {
            let (report, records, _) = evaluate_ed(corpus, &predictions, args.mode, &opts).map_err(Failure::eval)?;
            reports.insert(EvalTask::Ed, report);
            scored = records;
        }
        Task::Argument => {
            let input = match (&ed_predictions, &trigger_file) {
                (Some(file), _) => TriggerInput::Predictions(file),
                (None, Some(file)) => TriggerInput::Triggers { id: &trigger_id, file },
                (None, None) => TriggerInput::None,
            };
            let out = evaluate(corpus, input, Some(&predictions), args.mode, &opts).map_err(Failure::eval)?;
            if let Some(ed) = out.ed {
                reports.insert(EvalTask::Ed, ed);
            }
            reports.insert(EvalTask::Eae, out.eae.expect("argument predictions were given"));
            scored = out.ed_records.into_iter().chain(out.eae_records).collect();
        }
    }

    let config = RunConfig {
        subcommand: "score",
        corpus: display(&args.corpus.corpus),
        variant: args.corpus.variant.as_deref().map(display),
        variant_config: loaded.variant,
        candidate_policy: loaded.policy.trigger,
        predictions: display(&args.predictions),
        paradigm: args.paradigm,
        task: args.task,
        ed_predictions: args.ed_predictions.as_deref().map(display),
        ed_paradigm: args.ed_paradigm,
        triggers: args.triggers.as_deref().map(display),
        store: args.store.as_deref().map(display),
        producer: args.producer.clone(),
        corpus_id: args.corpus_id.clone(),
        mode: args.mode,
        convention: args.convention,
        eae_match: args.eae_match,
        // CLS predictions already live on the candidate set.
        output_space: if args.standardize || args.paradigm == Paradigm::Cls { "candidates" } else { "raw" },
        stray_i: args.stray_i,
    };
    let report = RunReport { config: &config, corpus_hash: &loaded.raw_hash, fingerprint: &loaded.fingerprint, reports: &reports };
    let json = pretty(&report);
    let table = score_table(&reports);

    if let Some(path) = &args.dump_discards {
        let records: Vec<&ScoredRecord> = scored.iter().collect();
        write_atomic(path, discard_ledger(&records).as_bytes())?;
    }
    match &args.output {
        Some(path) => {
            write_atomic(path, json.as_bytes())?;
            let mut txt = path.clone().into_os_string();
            txt.push(".txt");
            write_atomic(Path::new(&txt), table.as_bytes())?;
            emit(None, &table)
        }
        None => emit(None, &json),
    }
}

pub fn standardize(args: &StandardizeArgs) -> Outcome<()> {
    let loaded = load(&args.corpus)?;
    let corpus = &loaded.corpus;
    let predictions = load_predictions(&args.predictions, args.paradigm, corpus)?;
    let opts = StandardizeOptions { stray_i: args.stray_i };
    let records = prepare_records(&predictions, corpus, &loaded.policy, &opts, true).map_err(Failure::eval)?;
    let mut out = String::new();
    for r in &records {
        if let ScoredRecord::Standardized(s) = r {
            out.push_str(&s.to_json_line());
            out.push('\n');
        }
    }
    emit(args.output.as_deref(), &out)
}

fn read_report(path: &Path) -> Outcome<ReportHeader> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::config(format!("{}: not a score report: {e}", path.display())))
}

pub fn compare(args: &CompareArgs) -> Outcome<()> {
    let a = read_report(&args.a)?;
    let b = read_report(&args.b)?;
    if a.corpus_hash != b.corpus_hash {
        return Err(Failure::config(format!(
            "reports come from different corpora ({} has {}, {} has {})",
            args.a.display(),
            a.corpus_hash,
            args.b.display(),
            b.corpus_hash
        )));
    }
    let table = delta_table(&a.reports, &b.reports).ok_or_else(|| Failure::config("the reports share no task"))?;
    emit(None, &table)
}

pub fn store_put(args: &StorePutArgs) -> Outcome<()> {
    let loaded = load(&args.corpus)?;
    let corpus = &loaded.corpus;
    let triggers = match (&args.triggers, &args.ed_predictions, args.ed_paradigm) {
        (Some(path), _, _) => load_triggers(path)?,
        (None, Some(path), Some(paradigm)) => {
            let file = load_predictions(path, paradigm, corpus)?;
            let opts = EvalOptions { policy: loaded.policy, standardize: args.standardize, ..EvalOptions::default() };
            let (_, _, flat) = evaluate_ed(corpus, &file, EvalMode::Pipeline, &opts).map_err(Failure::eval)?;
            TriggerFile::from_predictions(corpus, &flat)
        }
        _ => unreachable!("clap requires a trigger source"),
    };
    let store = TriggerStore::open(&args.store).map_err(Failure::config)?;
    let entry = TriggerStoreEntry::new(&args.corpus_id, &loaded.fingerprint, &args.producer, triggers, corpus)
        .map_err(Failure::eval)?;
    let outcome = store.put(&entry).map_err(Failure::eval)?;
    let verb = match outcome {
        PutOutcome::Created => "stored",
        PutOutcome::Unchanged => "already stored",
    };
    emit(None, &format!("{verb} {} (ED F1 {:.1})\n", entry.file(), entry.ed_report().f1 * 100.0))
}

pub fn store_get(args: &StoreGetArgs) -> Outcome<()> {
    let loaded = load(&args.corpus)?;
    let store = TriggerStore::open(&args.store).map_err(Failure::config)?;
    let entry = store
        .get(&args.corpus_id, &loaded.fingerprint, args.producer.as_deref())
        .map_err(Failure::eval)?
        .ok_or_else(|| {
            Failure::config(format!("no stored triggers for corpus {} under fingerprint {}", args.corpus_id, loaded.fingerprint))
        })?;
    emit(args.output.as_deref(), &entry.triggers().to_jsonl())
}

pub fn store_list(args: &StoreListArgs) -> Outcome<()> {
    let store = TriggerStore::open(&args.store).map_err(Failure::config)?;
    let manifest = store.list().map_err(Failure::eval)?;
    emit(None, &pretty(&manifest))
}
