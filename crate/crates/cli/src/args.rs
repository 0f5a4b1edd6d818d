// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use transplant_core::eval::Direction;
use transplant_core::transplant::PairSetKind;
use transplant_core::TransplantMode;

#[derive(Debug, Parser)]
#[command(
    name = "xtransplant",
    version,
    about = "Cross-lingual feed-forward transplantation runner"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep layer pairs on pilot instances and store judged grids.
    Pilot(PilotArgs),
    /// Pick one layer pair per language from pilot grids.
    Select(SelectArgs),
    /// Run selected pairs on unseen instances.
    Apply(ApplyArgs),
    /// Evaluate plain, CoT and PIM baselines.
    Eval(EvalArgs),
    /// Aggregate grids, baselines and applications into tables and heatmaps.
    Report(ReportArgs),
    /// Compare feed-forward and whole-hidden-state transplantation on one prompt pair.
    HiddenDemo(DemoArgs),
    /// Decode every layer's residual state at the last prompt position.
    Lens(LensArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Safetensors checkpoint, or `synth:<seed>[:<layers>]` for a seeded synthetic model.
    #[arg(long)]
    pub model: String,
    /// `key = value` model config (required for checkpoints, optional for synth).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Vocabulary file, one piece per line (default: byte tokenizer).
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Only these language tags (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub langs: Vec<String>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = transplant_core::model::DEFAULT_MAX_NEW)]
    pub max_new: usize,
    /// Which rendering donates activations: en2x (English source) or x2en.
    #[arg(long, default_value = "en2x", value_parser = parse_direction)]
    pub direction: Direction,
    /// Template directory laid out as `<dataset>/<lang>.txt`.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairsArg {
    Full,
    SourceLast,
    TargetFirst,
}

impl From<PairsArg> for PairSetKind {
    fn from(p: PairsArg) -> Self {
        match p {
            PairsArg::Full => PairSetKind::Full,
            PairsArg::SourceLast => PairSetKind::SourceLast,
            PairsArg::TargetFirst => PairSetKind::TargetFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ffn,
    Hidden,
}

impl From<ModeArg> for TransplantMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ffn => TransplantMode::Ffn,
            ModeArg::Hidden => TransplantMode::Hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Oa,
    Sl,
    Tf,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Plain,
    Cot,
    Pim,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BankArg {
    Source,
    Target,
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct PilotArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    /// JSONL dataset(s).
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = PairsArg::Full)]
    pub pairs: PairsArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Ffn)]
    pub mode: ModeArg,
    /// Keep at most this many instances per language, sampled with `--seed`.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 666)]
    pub seed: u64,
    /// Recompute instances that already have outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset names under `<out>/pilot` (default: all).
    #[arg(long)]
    pub dataset: Vec<String>,
    #[arg(long, value_enum, default_value_t = StrategyArg::All)]
    pub strategy: StrategyArg,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    /// Unseen JSONL dataset(s).
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = StrategyArg::All)]
    pub strategy: StrategyArg,
    /// Selection file `{"<lang>": [i, j]}`, or `identity:<k>` for `(k, k)` everywhere.
    /// Default: `<out>/selection/<dataset>/<strategy>.json`.
    #[arg(long)]
    pub selection: Option<String>,
    /// Record the bank from the source rendering or from the target prompt.
    #[arg(long, value_enum, default_value_t = BankArg::Source)]
    pub bank: BankArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub gen: GenArgs,
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = VariantArg::Plain)]
    pub variant: VariantArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset names under `<out>/pilot` (default: all).
    #[arg(long)]
    pub dataset: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Prompt whose activations are donated.
    #[arg(long)]
    pub source_prompt: String,
    /// Prompt that is answered.
    #[arg(long)]
    pub prompt: String,
    /// Layer pair `i,j` (default: last layer into layer 0).
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long, default_value_t = transplant_core::model::DEFAULT_MAX_NEW)]
    pub max_new: usize,
    /// Also write the comparison as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LensArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub prompt: String,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}
