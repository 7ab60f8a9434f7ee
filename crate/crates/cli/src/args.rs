use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Acoustic-to-articulatory inversion with a speech stream and a phoneme
/// stream.
///
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
/// (NaN/Inf).
#[derive(Debug, Parser)]
#[command(name = "spn", version, rename_all = "snake_case")]
pub struct Cli {
    /// Log progress (per epoch and per fold) to stderr.
    #[arg(long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[command(rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic corpus with a manifest.
    Synth(SynthArgs),
    /// Train one model on a manifest under a scenario.
    Train(TrainArgs),
    /// Score one checkpoint on a manifest, per speaker.
    Eval(EvalArgs),
    /// Leave-one-speaker-out evaluation: one fold per speaker.
    Loso(LosoArgs),
    /// Full model against the model without a phoneme stream, same folds.
    Ablate(AblateArgs),
    /// Finite-difference gradient suite over primitives, layers and the
    /// whole network.
    ///
    /// Prints the largest relative error per check. Whole-network
    /// coordinates whose derivative is below the finite-difference
    /// resolution are redrawn and counted as rejected. Exits 3 if any check
    /// exceeds its tolerance.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
pub struct SynthArgs {
    /// Output directory for the corpus.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub speakers: usize,
    /// Utterances per speaker.
    #[arg(long, default_value_t = 20)]
    pub utts: usize,
    /// Random seed (required).
    #[arg(long)]
    pub seed: u64,
    /// Std of the per-speaker constant articulator offset, mm.
    #[arg(long, default_value_t = 2.0)]
    pub speaker_offset_scale: f64,
    /// Std of the smoothed articulator noise, mm.
    #[arg(long, default_value_t = 0.3)]
    pub noise_scale: f64,
    /// Std of the additive feature noise.
    #[arg(long, default_value_t = 0.1)]
    pub acoustic_noise: f64,
    /// Weight of the phoneme identity in the features.
    #[arg(long, default_value_t = 1.0)]
    pub acoustic_phoneme_gain: f64,
    /// Weight of the articulator positions in the features.
    #[arg(long, default_value_t = 1.0)]
    pub acoustic_ema_gain: f64,
    /// Moving-average width applied to the articulator tracks, frames.
    #[arg(long, default_value_t = 5)]
    pub smoothing: usize,
    /// Write into an existing non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
pub enum ModelSize {
    /// Published widths: 64 filters per kernel, 6x8-head attention at 512,
    /// 150-unit BLSTMs, 300-unit dense layers.
    Full,
    /// Narrow widths for quick CPU runs.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
pub enum ReductionArg {
    /// Mean squared error over frames and channels.
    FrameMean,
    /// Summed squared error.
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
pub enum ChannelsArg {
    /// T1, T2, T3 in x and z.
    Tongue,
    /// All 12 channels.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
pub enum ScenarioArg {
    /// Phoneme stream only.
    S1,
    /// Pretrained phoneme stream frozen, rest trained.
    S2,
    /// Everything trained jointly.
    S3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
pub enum ArmArg {
    S1,
    /// S1 pretraining then S2, inside each fold.
    S2,
    S3,
    /// No phoneme stream, trained jointly.
    SpnS,
}

/// Training hyperparameters; defaults are the published values.
#[derive(Clone, Debug, Args, Serialize)]
#[command(rename_all = "snake_case")]
pub struct HyperArgs {
    /// Random seed (required).
    #[arg(long)]
    pub seed: u64,
    /// Passes over the training set.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Utterances per optimizer step.
    #[arg(long, default_value_t = 5)]
    pub batch_size: usize,
    /// Weight of the full-model loss term.
    #[arg(long, default_value_t = 1.0)]
    pub spn_weight: f64,
    /// Weight of the phoneme-stream loss term.
    #[arg(long, default_value_t = 1.0)]
    pub phoneme_weight: f64,
    #[arg(long, value_enum, default_value_t = ReductionArg::FrameMean)]
    pub reduction: ReductionArg,
    #[arg(long, value_enum, default_value_t = ModelSize::Full)]
    pub model: ModelSize,
    /// Per-speaker share of utterances used for training; the rest validate.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
pub struct OutArgs {
    /// Root directory; the run directory below it is named by config hash.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing run directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
pub struct TrainArgs {
    /// Manifest CSV: utterance_id,speaker_id,features,alignment,ema.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    /// S1 checkpoint supplying the frozen phoneme stream (S2 only).
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Train without the phoneme stream (S3 only).
    #[arg(long)]
    pub no_phoneme_stream: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = ChannelsArg::Tongue)]
    pub channels: ChannelsArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
pub struct LosoArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = ArmArg::S3)]
    pub arm: ArmArg,
    #[arg(long, value_enum, default_value_t = ChannelsArg::Tongue)]
    pub channels: ChannelsArg,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = ChannelsArg::Tongue)]
    pub channels: ChannelsArg,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
#[command(rename_all = "snake_case")]
pub struct GradcheckArgs {
    /// Random seed (required).
    #[arg(long)]
    pub seed: u64,
    /// Random points per check.
    #[arg(long, default_value_t = 3)]
    pub points: u64,
}
