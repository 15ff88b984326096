//! `rxnctx`: reaction-centre detection, vocabulary building, pre-training,
//! fine-tuning and entropy analysis from the command line.

mod artifacts;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rxnctx_core::encoders::EncoderKind;
use rxnctx_core::pretrain::Objective;

use error::{invalid, CliResult, Failure};

pub const LOG_ENV: &str = "REMO_LOG_LEVEL";

#[derive(Parser, Debug)]
#[command(name = "rxnctx", version, about = "Reaction-conditioned molecular pre-training toolkit")]
struct Cli {
    /// Cap on worker threads; output order never depends on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Io {
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// JSON config; unknown keys are rejected.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    #[value(name = "M")]
    M,
    #[value(name = "I")]
    I,
    #[value(name = "IM")]
    Im,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::M => Objective::M,
            ObjectiveArg::I => Objective::I,
            ObjectiveArg::Im => Objective::IM,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    Gin,
    Graphormer,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Gin => EncoderKind::Gin,
            EncoderArg::Graphormer => EncoderKind::Graphormer,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Restrict {
    All,
    Centres,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub io: Io,
    /// Count every reactant atom, or only reaction-centre atoms.
    #[arg(long, value_enum, default_value_t = Restrict::All)]
    pub restrict: Restrict,
    /// Vocabulary JSON; built from the corpus when omitted.
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from this checkpoint.
    #[arg(long, value_name = "PATH")]
    pub init_checkpoint: Option<PathBuf>,
    /// Vocabulary JSON; defaults to the one beside --init-checkpoint, else built from the corpus.
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub io: Io,
    /// Encoder used when no checkpoint is given.
    #[arg(long, value_enum)]
    pub encoder: Option<EncoderArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Pre-trained checkpoint supplying the encoder.
    #[arg(long, value_name = "PATH")]
    pub init_checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub io: Io,
    /// Checkpoint of the context-conditioned model.
    #[arg(long, value_name = "PATH")]
    pub conditional: PathBuf,
    /// Checkpoint of the context-free model.
    #[arg(long, value_name = "PATH")]
    pub unconditional: PathBuf,
    /// Defaults to vocab.json beside the conditional checkpoint.
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Defaults to vocab.json beside the checkpoint.
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
    /// Example index in corpus order.
    #[arg(long)]
    pub example: Option<usize>,
    /// Masked position within the example.
    #[arg(long)]
    pub position: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and filter a reaction corpus.
    Ingest(Io),
    /// Write the reaction centre of every reaction as JSON lines.
    DetectCentres(Io),
    /// Build the reconstruction vocabulary.
    BuildVocab(Io),
    /// Token distribution CSV.
    Stats(StatsArgs),
    /// Pre-train an encoder with the M, I or IM objective.
    Pretrain(PretrainArgs),
    /// Fine-tune a single-molecule regression head.
    FinetuneReg(FinetuneArgs),
    /// Fine-tune a molecule-pair classifier.
    FinetunePair(FinetuneArgs),
    /// Fine-tune a reaction-type classifier.
    FinetuneRxn(FinetuneArgs),
    /// Compare reconstruction entropy of conditional and context-free models.
    Entropy(EntropyArgs),
    /// Export one position's logits as a square grid.
    ExportGrid(GridArgs),
}

fn init_logging() -> CliResult<()> {
    let level = std::env::var(LOG_ENV).unwrap_or_else(|_| "warn".into());
    if !["error", "warn", "info", "debug"].contains(&level.as_str()) {
        return Err(invalid(format!("{LOG_ENV}={level} is not one of error, warn, info, debug")));
    }
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_logging()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Ingest(io) => commands::ingest(&io),
        Command::DetectCentres(io) => commands::detect_centres(&io),
        Command::BuildVocab(io) => commands::build_vocab(&io),
        Command::Stats(a) => commands::stats(&a),
        Command::Pretrain(a) => commands::pretrain(&a),
        Command::FinetuneReg(a) => commands::finetune(rxnctx_core::finetune::TaskKind::Regression, &a),
        Command::FinetunePair(a) => commands::finetune(rxnctx_core::finetune::TaskKind::Pair, &a),
        Command::FinetuneRxn(a) => commands::finetune(rxnctx_core::finetune::TaskKind::ReactionType, &a),
        Command::Entropy(a) => commands::entropy(&a),
        Command::ExportGrid(a) => commands::export_grid(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
