use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use lqsynth_core::degrade::PipelineKind;
use serde::Serialize;

/// Diffusion-based synthesis of realistic low-quality images.
#[derive(Parser)]
#[command(name = "lqsynth", version = crate::record::VERSION)]
#[command(after_help = "Any subcommand also accepts --config FILE with `key = value` lines; \
                        flags given on the command line take precedence.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Build a target corpus by degrading clean images with a held-out family.
    MakeToyDid(MakeToyDidArgs),
    /// Train the noise predictor on a dataset manifest.
    Train(TrainArgs),
    /// Apply a handcrafted degradation pipeline only.
    Degrade(DegradeArgs),
    /// Synthesize LQ images: degrade, diffuse, denoise, guard.
    Synth(SynthArgs),
    /// Fréchet-distance and PSNR curves over the diffusion step, as CSV.
    Sweep(SweepArgs),
    /// Fréchet distance of an LQ set against corpus statistics.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    None,
    Heavy,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
pub struct MakeToyDidArgs {
    /// Output directory for the corpus and its manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of clean PNGs. Procedural images are generated when absent.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    /// Number of procedural clean images.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Side of the procedural clean images.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = Severity::Heavy)]
    pub profile: Severity,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Dataset manifest (manifest.json).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 8e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.995)]
    pub ema: f64,
    /// Square training crop side.
    #[arg(long, default_value_t = 32)]
    pub patch: usize,
    #[arg(long, default_value_t = 1000)]
    pub t_total: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub base_channels: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub channel_mults: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub res_blocks: usize,
    #[arg(long, default_value_t = 128)]
    pub time_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub groups: usize,
    /// Per-step loss CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    /// Progress line every N steps (0 = quiet).
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
pub struct DegradeArgs {
    /// Directory of HQ PNGs.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = PipelineKind::HighOrder)]
    pub kind: PipelineKind,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepProfile {
    /// Upper step bound for face-like data.
    Face,
    /// Upper step bound for natural images.
    Natural,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of HQ PNGs.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Regenerate every accepted pair of this pair manifest instead of
    /// drawing new ones.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long, default_value_t = PipelineKind::HighOrder)]
    pub kind: PipelineKind,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long, value_enum, default_value_t = StepProfile::Face)]
    pub profile: StepProfile,
    /// Overrides the profile's upper step bound.
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub t_min: usize,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub guard: bool,
    #[arg(long, default_value_t = 24.0)]
    pub guard_db: f64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: usize,
    /// Skip posterior noise in the reverse chain.
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub deterministic: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    /// Hand-designed patch statistics.
    Patch,
    /// Encoder activations of the trained denoiser.
    Denoiser,
}

#[derive(Args, Serialize)]
pub struct FeatureArgs {
    #[arg(long, value_enum, default_value_t = Extractor::Patch)]
    pub extractor: Extractor,
    #[arg(long, default_value_t = 8)]
    pub patch_size: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub strides: Vec<usize>,
    /// Encoder level for denoiser features.
    #[arg(long, default_value_t = 0)]
    pub feature_level: usize,
    /// Time index for denoiser features.
    #[arg(long, default_value_t = 0)]
    pub feature_t: usize,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of HQ PNGs.
    #[arg(long)]
    pub hq: PathBuf,
    /// Manifest of the target corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,25,50,100,150,200")]
    pub t_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "bicubic,classical,shuffle,high_order")]
    pub kinds: Vec<PipelineKind>,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    pub deterministic: bool,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Args, Serialize)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// Manifest of the target corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory of LQ PNGs to score.
    #[arg(long)]
    pub lq: PathBuf,
    /// JSON report to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Needed for denoiser features.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
}
