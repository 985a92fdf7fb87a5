use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dmbp::method::Method;
use dmbp::metrics::Metric;

#[derive(Debug, Parser)]
#[command(name = "dmbp", version, about = "Attribution maps for ReLU networks")]
pub struct Cli {
    /// Log optimizer progress and other diagnostics.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one attribution map and write it as a heatmap and raw file.
    Attribute(AttributeArgs),
    /// Score attribution methods with insertion metrics over a manifest.
    Evaluate(EvaluateArgs),
    /// Rank-correlate a map with the map of a network whose classifier was
    /// redrawn at random.
    Sanity(SanityArgs),
    /// Print the layer table and check shapes end to end.
    Inspect(ModelArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Weight file (DMBPW001).
    #[arg(long)]
    pub model: PathBuf,
    /// Architecture file (JSON).
    #[arg(long)]
    pub arch: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TuningArgs {
    /// Mask optimization iterations.
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    /// RMSProp learning rate.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Seed for smoothgrad noise, tie breaking and classifier redraws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Integrated-gradients steps.
    #[arg(long, default_value_t = 50)]
    pub ig_steps: usize,
    /// Smoothgrad samples.
    #[arg(long, default_value_t = 25)]
    pub sg_samples: usize,
    /// Smoothgrad noise as a fraction of the input value range.
    #[arg(long, default_value_t = 0.15)]
    pub sg_noise: f64,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub image: PathBuf,
    /// Class index to explain.
    #[arg(long)]
    pub target: usize,
    /// One of dmbp, grad, ig, sg.
    #[arg(long)]
    pub method: Method,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Blend the heatmap over the input image.
    #[arg(long)]
    pub overlay: bool,
    /// Where to write the dmbp loss trace (default: next to the map).
    #[arg(long)]
    pub loss_trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// im or cim.
    #[arg(long)]
    pub metric: Metric,
    /// JSON list of {path, target, other_labels}.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated methods to compare.
    #[arg(long, value_delimiter = ',', required = true)]
    pub method: Vec<Method>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Insertion steps.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Blur sigma of the insertion baseline, in pixels.
    #[arg(long, default_value_t = 5.0)]
    pub blur_sigma: f64,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SanityArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub target: usize,
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
}
