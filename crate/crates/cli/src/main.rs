use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use radeval_core::corpus::CorpusFormat;
use radeval_core::workflow::{CollaborationPolicy, Phase};

mod corpus_cmd;
mod decode;
mod input;
mod score;
mod study;

#[derive(Parser)]
#[command(name = "radeval", version, about = "Radiology report evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw corpus and write the normalized JSONL corpus.
    Ingest {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
        /// CSV of rejected records (line, reason).
        #[arg(long)]
        rejects: Option<PathBuf>,
    },
    /// Remove lateral-only, impression-less and prior-referencing TRAIN cases.
    FilterTrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Prior-reference lexicon file replacing the bundled one.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// CSV of removed cases (case_id, reason).
        #[arg(long)]
        removed: Option<PathBuf>,
    },
    /// Inverse-prevalence example weights for the TRAIN split.
    Weights {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded stratified sample of NORMAL and ABNORMAL cases.
    Sample {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        normal: usize,
        #[arg(long)]
        abnormal: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample manifest (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Also write the sampled cases as a corpus JSONL.
        #[arg(long)]
        cases_out: Option<PathBuf>,
    },
    /// Rule-based finding labels for every report in a corpus.
    Label {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted reports against references.
    Score(score::ScoreArgs),
    /// Beam search or nucleus-sampling ensemble on a toy Markov model.
    DecodeSim(decode::DecodeArgs),
    /// Rating task generation, assignment and export.
    Tasks {
        #[command(subcommand)]
        command: TasksCommand,
    },
    /// Aggregate an event log into result tables.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = radeval_core::metrics::bootstrap::DEFAULT_RESAMPLES)]
        bootstrap: usize,
        #[arg(long, default_value_t = radeval_core::metrics::bootstrap::DEFAULT_LEVEL)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip tasks that do not yet have all their ratings.
        #[arg(long)]
        complete_only: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding case images (resolved against each case's
        /// image_ref); missing ones are converted to PNG before serving.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Print every registered rater's access code and exit.
        #[arg(long)]
        print_access_codes: bool,
    },
}

#[derive(Subcommand)]
enum TasksCommand {
    /// Create tasks for a phase and append them to the event log.
    Generate(GenerateArgs),
    /// Register raters and assign every unassigned task.
    Assign {
        #[arg(long)]
        log: PathBuf,
        /// CSV with a rater_id column and an optional qualifications column.
        #[arg(long)]
        raters: PathBuf,
        #[arg(long, default_value_t = 2)]
        per_task: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write blinded task payloads.
    Export {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: ExportFormat,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    phase: Phase,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    log: PathBuf,
    /// Corpus JSONL holding the original reports.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// JSONL of model reports: {"case_id", "report"}.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Sample manifest restricting the cases.
    #[arg(long)]
    cases: Option<PathBuf>,
    /// Which edits feed the collaboration round.
    #[arg(long, value_enum, default_value = "first-completed")]
    policy: PolicyArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for CorpusFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => CorpusFormat::Jsonl,
            FormatArg::Csv => CorpusFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    FirstCompleted,
    BothVariants,
}

impl From<PolicyArg> for CollaborationPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::FirstCompleted => CollaborationPolicy::FirstCompleted,
            PolicyArg::BothVariants => CollaborationPolicy::BothVariants,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest { path, format, out, rejects } => corpus_cmd::ingest(&path, format.into(), &out, rejects.as_deref()),
        Command::FilterTrain { corpus, out, lexicon, removed } => {
            corpus_cmd::filter_train(&corpus, &out, lexicon.as_deref(), removed.as_deref())
        }
        Command::Weights { corpus, out } => corpus_cmd::weights(&corpus, &out),
        Command::Sample { corpus, normal, abnormal, seed, out, cases_out } => {
            corpus_cmd::sample(&corpus, normal, abnormal, seed, &out, cases_out.as_deref())
        }
        Command::Label { corpus, out } => corpus_cmd::label(&corpus, &out),
        Command::Score(args) => score::run(&args),
        Command::DecodeSim(args) => decode::run(&args),
        Command::Tasks { command } => match command {
            TasksCommand::Generate(args) => study::generate(&args),
            TasksCommand::Assign { log, raters, per_task, seed } => study::assign(&log, &raters, per_task, seed),
            TasksCommand::Export { log, format: ExportFormat::Jsonl, out } => study::export(&log, out.as_deref()),
        },
        Command::Analyze { log, out, bootstrap, level, seed, complete_only } => {
            study::analyze(&log, &out, bootstrap, level, seed, complete_only)
        }
        Command::Serve { config, images, print_access_codes } => {
            study::serve(config.as_deref(), images.as_deref(), print_access_codes)
        }
    }
}
