//! Command-line surface. Every option is an override of the matching
//! configuration field, so absent flags fall through to the config file and
//! then to the built-in default quoted in each help line.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tspn_core::model::HeadMode;

#[derive(Debug, Parser)]
#[command(name = "tspn", version, about = "Video relation detection with temporal span proposals")]
pub struct Cli {
    /// TOML run configuration; flags override its values [default: none]
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and split it into train.json and test.json
    GenSynth(GenSynthArgs),
    /// Fit a model and write it to a model directory
    Train(TrainArgs),
    /// Detect relations with a trained model
    Predict(PredictArgs),
    /// Detect relations with the segment-and-associate baseline
    Baseline(BaselineArgs),
    /// Score predictions against ground truth
    Eval(EvalArgs),
    /// Print proposal counts of the segment, window and sector schemes
    Complexity(ComplexityArgs),
    /// Dump sector grids and labels for annotated pairs
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Scenario seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of videos before the split [default: 250]
    #[arg(long)]
    pub videos: Option<usize>,
    /// Box jitter amplitude in pixels [default: 0.25]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Output directory [default: synth]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Annotation end frames are inclusive [default: false]
    #[arg(long)]
    pub inclusive_ends: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Direct,
    RankOne,
}

impl From<HeadArg> for HeadMode {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Direct => HeadMode::Direct,
            HeadArg::RankOne => HeadMode::RankOne,
        }
    }
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Feature provider: synthetic-descriptor or precomputed [default: synthetic-descriptor]
    #[arg(long, value_name = "NAME")]
    pub features: Option<String>,
    /// Vector file for the precomputed provider [default: none]
    #[arg(long, value_name = "PATH")]
    pub features_path: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training annotations (required here or as paths.train_data) [default: none]
    #[arg(long, value_name = "PATH")]
    pub train_data: Option<PathBuf>,
    /// Directory to write the model into [default: model]
    #[arg(long, value_name = "DIR")]
    pub model_dir: Option<PathBuf>,
    /// Passes over the training set [default: 60]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Initialization and sampling seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Temporal sectors per pair [default: 16]
    #[arg(long)]
    pub k: Option<usize>,
    /// Hidden width of the relationness head [default: 64]
    #[arg(long)]
    pub d_h: Option<usize>,
    /// Span head form [default: direct]
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    /// Train with one sector per pair, overriding --k [default: false]
    #[arg(long)]
    pub single_sector: bool,
    /// Drop the relationness loss and train on related pairs only [default: false]
    #[arg(long)]
    pub no_relationness: bool,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct InferenceArgs {
    /// Annotations to run on (required here or as paths.data) [default: none]
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Trained model directory [default: model]
    #[arg(long, value_name = "DIR")]
    pub model_dir: Option<PathBuf>,
    /// Pairs of interest kept per video [default: 64]
    #[arg(long)]
    pub p: Option<usize>,
    /// Temporal sectors; must equal the trained value [default: from the model]
    #[arg(long)]
    pub k: Option<usize>,
    /// Span activation threshold [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Triplets kept per video [default: 100]
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Inactive sectors bridged when decoding spans [default: 0]
    #[arg(long)]
    pub decode_gap: Option<usize>,
    /// Score every pair instead of gating by relationness [default: false]
    #[arg(long)]
    pub no_relationness: bool,
    /// Worker threads, 0 for all cores [default: 0]
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub data_opts: DataArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Prediction file to write [default: predictions.json]
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Prediction file to write [default: baseline_predictions.json]
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Segment length in frames [default: 30]
    #[arg(long)]
    pub segment_len: Option<u32>,
    /// Segment stride in frames [default: 15]
    #[arg(long)]
    pub stride: Option<u32>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth annotations (falls back to paths.data) [default: none]
    #[arg(long, value_name = "PATH")]
    pub ground_truth: Option<PathBuf>,
    /// Prediction file to score [default: none]
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
    /// Directory for report.txt and report.json [default: the predictions file's directory]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Subject and object vIoU must exceed this [default: 0.5]
    #[arg(long)]
    pub viou_threshold: Option<f64>,
    /// Compare whole trajectories instead of clipping them to relation spans [default: false]
    #[arg(long)]
    pub no_clip: bool,
    /// Ground truth longer than this many frames gets its own R@100 [default: 90]
    #[arg(long)]
    pub long_relation_frames: Option<u32>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    /// Video length; repeat together with --l and --s [default: 120]
    #[arg(long = "L", value_name = "L")]
    pub big_l: Vec<u64>,
    /// Segment length [default: 30]
    #[arg(long = "l", value_name = "l")]
    pub l: Vec<u64>,
    /// Stride [default: 15]
    #[arg(long = "s", value_name = "s")]
    pub s: Vec<u64>,
    /// Ranges LO:HI:STEP for L, l and s; invalid combinations are skipped [default: none]
    #[arg(long, num_args = 3, value_names = ["L", "l", "s"])]
    pub sweep: Option<Vec<String>>,
    /// Also write complexity.txt and complexity.json here [default: none]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Annotations to read (required here or as paths.data) [default: none]
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Video id [default: the first video]
    #[arg(long)]
    pub video: Option<String>,
    /// Subject trajectory id [default: every related pair]
    #[arg(long)]
    pub subject: Option<u64>,
    /// Object trajectory id [default: every related pair]
    #[arg(long)]
    pub object: Option<u64>,
    /// Temporal sectors [default: 16]
    #[arg(long)]
    pub k: Option<usize>,
    /// Also write inspect.json here [default: none]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub data_opts: DataArgs,
}

/// Parses `LO:HI:STEP`.
pub fn parse_range(text: &str) -> Option<(u64, u64, u64)> {
    let parts: Vec<u64> = text.split(':').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    match parts.as_slice() {
        [lo, hi, step] if lo <= hi && *step > 0 => Some((*lo, *hi, *step)),
        _ => None,
    }
}
