//! Run reports, the text tables printed next to them, and report deltas.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use eeval::metrics::{EvalTask, Scores};
use eeval::variants::VariantConfig;
use eeval::{Convention, EaeMatch, EvalMode, EvalReport, Paradigm, StrayI, Task, TriggerPolicy};
use serde::{Deserialize, Serialize};

/// Everything that determines a score run's result.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: &'static str,
    pub corpus: String,
    pub variant: Option<String>,
    pub variant_config: VariantConfig,
    pub candidate_policy: TriggerPolicy,
    pub predictions: String,
    pub paradigm: Paradigm,
    pub task: Task,
    pub ed_predictions: Option<String>,
    pub ed_paradigm: Option<Paradigm>,
    pub triggers: Option<String>,
    pub store: Option<String>,
    pub producer: Option<String>,
    pub corpus_id: Option<String>,
    pub mode: EvalMode,
    pub convention: Convention,
    pub eae_match: EaeMatch,
    /// `candidates` when predictions are read on the candidate set, `raw`
    /// when at face value.
    pub output_space: &'static str,
    pub stray_i: StrayI,
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub config: &'a RunConfig,
    pub corpus_hash: &'a str,
    pub fingerprint: &'a str,
    pub reports: &'a BTreeMap<EvalTask, EvalReport>,
}

/// The part of a report `compare` reads.
#[derive(Debug, Deserialize)]
pub struct ReportHeader {
    pub corpus_hash: String,
    pub reports: BTreeMap<EvalTask, EvalReport>,
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

const CELL: usize = 7;
const TASKS: [EvalTask; 2] = [EvalTask::Ed, EvalTask::Eae];

/// P, R, F1 for ED and EAE in percent, one decimal; `-` for a task the run
/// did not score.
pub fn score_table(reports: &BTreeMap<EvalTask, EvalReport>) -> String {
    let group = 3 * CELL;
    let mut out = String::new();
    for task in TASKS {
        let _ = write!(out, "{:^group$}", task.to_string());
    }
    out = out.trim_end().to_owned();
    out.push('\n');
    for _ in TASKS {
        for h in ["P", "R", "F1"] {
            let _ = write!(out, "{h:>CELL$}");
        }
    }
    out.push('\n');
    for task in TASKS {
        let cells = match reports.get(&task) {
            Some(r) => [pct(r.precision), pct(r.recall), pct(r.f1)],
            None => ["-".into(), "-".into(), "-".into()],
        };
        for c in cells {
            let _ = write!(out, "{c:>CELL$}");
        }
    }
    out.push('\n');
    out
}

/// Percentage-point difference with an explicit sign.
pub fn signed_delta(a: f64, b: f64) -> String {
    let s = format!("{:+.1}", (b - a) * 100.0);
    if s == "-0.0" {
        "+0.0".into()
    } else {
        s
    }
}

/// ΔP, ΔR, ΔF1 (B − A) for every task both reports scored. Scores are
/// recomputed from the counts so the 6-decimal rounding in the files does
/// not leak into the deltas.
pub fn delta_table(a: &BTreeMap<EvalTask, EvalReport>, b: &BTreeMap<EvalTask, EvalReport>) -> Option<String> {
    let shared: Vec<EvalTask> = TASKS.into_iter().filter(|t| a.contains_key(t) && b.contains_key(t)).collect();
    if shared.is_empty() {
        return None;
    }
    let mut out = format!("{:<5}{:>CELL$}{:>CELL$}{:>CELL$}\n", "Task", "ΔP", "ΔR", "ΔF1");
    for task in shared {
        let x = Scores::from_counts(a[&task].counts);
        let y = Scores::from_counts(b[&task].counts);
        let _ = writeln!(
            out,
            "{:<5}{:>CELL$}{:>CELL$}{:>CELL$}",
            task.to_string(),
            signed_delta(x.precision, y.precision),
            signed_delta(x.recall, y.recall),
            signed_delta(x.f1, y.f1),
        );
    }
    Some(out)
}
