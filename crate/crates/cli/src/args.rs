use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use eeval::variants::MultiTokenPolicy;
use eeval::{Convention, EaeMatch, EvalMode, Paradigm, StrayI, Task, TriggerPolicy};

#[derive(Parser, Debug)]
#[command(name = "eeval", version, about = "Event extraction evaluation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dataset statistics of a corpus under a preprocessing variant
    Stats(StatsArgs),
    /// Score predictions and write a report
    Score(ScoreArgs),
    /// Project predictions onto the candidate set
    Standardize(StandardizeArgs),
    /// Signed differences between two reports (B minus A)
    Compare(CompareArgs),
    /// Manage a directory of predicted triggers
    #[command(subcommand)]
    TriggerStore(StoreCommand),
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "trigger" => Ok(Task::Trigger),
        "argument" => Ok(Task::Argument),
        _ => Err(format!("unknown task {s:?} (expected trigger or argument)")),
    }
}

/// Corpus and the variant applied to it.
#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,

    /// Variant config file; the identity variant when omitted
    #[arg(long)]
    pub variant: Option<PathBuf>,

    /// Overrides the variant file's multi_token_policy
    #[arg(long)]
    pub multi_token_policy: Option<MultiTokenPolicy>,

    /// every_token or every_span_up_to:K
    #[arg(long, default_value = "every_token")]
    pub candidate_policy: TriggerPolicy,

    /// Worker threads; defaults to all cores
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    #[arg(long)]
    pub predictions: PathBuf,

    #[arg(long)]
    pub paradigm: Paradigm,

    #[arg(long, value_parser = parse_task)]
    pub task: Task,

    /// ED predictions; the trigger source in pipeline mode and scored for
    /// the ED report
    #[arg(long, conflicts_with_all = ["triggers", "store"], requires = "ed_paradigm")]
    pub ed_predictions: Option<PathBuf>,

    #[arg(long, requires = "ed_predictions")]
    pub ed_paradigm: Option<Paradigm>,

    /// Trigger file used as the pipeline context
    #[arg(long, conflicts_with = "store")]
    pub triggers: Option<PathBuf>,

    /// Trigger store directory used as the pipeline context
    #[arg(long, requires = "corpus_id")]
    pub store: Option<PathBuf>,

    #[arg(long, requires = "store")]
    pub producer: Option<String>,

    #[arg(long, requires = "store")]
    pub corpus_id: Option<String>,

    #[arg(long, default_value = "gold_trigger")]
    pub mode: EvalMode,

    #[arg(long, default_value = "modern")]
    pub convention: Convention,

    #[arg(long, default_value = "by_event_type")]
    pub eae_match: EaeMatch,

    #[arg(long)]
    pub standardize: bool,

    #[arg(long, default_value = "open_span")]
    pub stray_i: StrayI,

    /// Write every discarded prediction to this JSONL file
    #[arg(long, requires = "standardize")]
    pub dump_discards: Option<PathBuf>,

    /// Report path; the text table goes next to it with a .txt suffix
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StandardizeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    #[arg(long)]
    pub predictions: PathBuf,

    #[arg(long)]
    pub paradigm: Paradigm,

    #[arg(long, default_value = "open_span")]
    pub stray_i: StrayI,

    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum StoreCommand {
    /// Score predicted triggers and add them to the store
    Put(StorePutArgs),
    /// Fetch the triggers stored for a corpus variant
    Get(StoreGetArgs),
    /// Print the manifest
    List(StoreListArgs),
}

#[derive(Args, Debug)]
pub struct StorePutArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    #[arg(long)]
    pub store: PathBuf,

    #[arg(long)]
    pub corpus_id: String,

    #[arg(long)]
    pub producer: String,

    /// Trigger file to store
    #[arg(long, required_unless_present = "ed_predictions", conflicts_with = "ed_predictions")]
    pub triggers: Option<PathBuf>,

    /// ED predictions to turn into a trigger file
    #[arg(long, requires = "ed_paradigm")]
    pub ed_predictions: Option<PathBuf>,

    #[arg(long, requires = "ed_predictions")]
    pub ed_paradigm: Option<Paradigm>,

    /// Standardize the ED predictions first
    #[arg(long, requires = "ed_predictions")]
    pub standardize: bool,
}

#[derive(Args, Debug)]
pub struct StoreGetArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    #[arg(long)]
    pub store: PathBuf,

    #[arg(long)]
    pub corpus_id: String,

    #[arg(long)]
    pub producer: Option<String>,

    /// Where to write the trigger file; stdout when omitted
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StoreListArgs {
    #[arg(long)]
    pub store: PathBuf,
}

impl ScoreArgs {
    /// Flag combinations clap cannot express.
    pub fn check(&self) -> Result<(), String> {
        if self.task == Task::Trigger && (self.ed_predictions.is_some() || self.triggers.is_some() || self.store.is_some()) {
            return Err("--ed-predictions, --triggers and --store only apply to --task argument".into());
        }
        let has_source = self.ed_predictions.is_some() || self.triggers.is_some() || self.store.is_some();
        if self.task == Task::Argument && self.mode == EvalMode::Pipeline && !has_source {
            return Err("pipeline mode needs a trigger source: pass --ed-predictions, --triggers or --store".into());
        }
        if self.mode == EvalMode::GoldTrigger && (self.triggers.is_some() || self.store.is_some()) {
            return Err("--triggers and --store only apply to --mode pipeline".into());
        }
        Ok(())
    }
}
