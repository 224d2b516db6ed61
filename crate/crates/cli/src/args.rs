//! Command-line flags and the optional TOML config file.
//!
//! Every tunable flag is optional at parse time so that values can come from
//! the config file's table for the subcommand; a flag given on the command
//! line always wins, and built-in defaults fill whatever is left.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "gesture",
    version,
    about = "Gesture recognition from smartphone IMU recordings"
)]
pub struct Cli {
    /// TOML file with `[synth]`, `[train]`, `[eval]` or `[infer]` tables.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset in the recording directory layout.
    Synth(SynthArgs),
    /// Train a classifier on a recording directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a recording directory.
    Eval(EvalArgs),
    /// Classify a sensor CSV with a sliding window, one line per emission.
    Infer(InferArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
pub enum VariantArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub participants: Option<usize>,
    #[arg(long)]
    pub sessions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accelerometer white noise, m/s².
    #[arg(long)]
    pub noise_acc: Option<f64>,
    /// Gyroscope white noise, rad/s.
    #[arg(long)]
    pub noise_gyro: Option<f64>,
    /// Gesture size in meters.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Hz.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Mean gesture duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Pivot-to-phone distance in meters for the arm tilt; 0 disables it.
    #[arg(long)]
    pub pivot_radius: Option<f64>,
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Recording directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory for checkpoints, metrics and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop after this many epochs without validation improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Comma-separated participant aliases held out for validation.
    #[arg(long, value_delimiter = ',')]
    pub val_aliases: Option<Vec<String>>,
    /// Train only on the k lowest-variance remaining participants.
    #[arg(long)]
    pub limited_k: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
    /// Subtract gravity estimated from each recording's first K samples.
    #[arg(long, value_name = "K")]
    pub gravity_samples: Option<usize>,
    /// Remove one channel (acc_x … gyro_z) before training.
    #[arg(long)]
    pub drop_axis: Option<String>,
    /// Added to sensor timestamps before matching them to events.
    #[arg(long, allow_hyphen_values = true)]
    pub clock_offset_ms: Option<i64>,
    /// Continue past files that fail to parse instead of exiting.
    #[arg(long)]
    #[serde(default)]
    pub skip_corrupt: bool,
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Preprocessing file; defaults to `pipeline.toml` beside the checkpoint.
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory for the confusion matrix and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only evaluate these participants (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub aliases: Option<Vec<String>>,
    #[arg(long, allow_hyphen_values = true)]
    pub clock_offset_ms: Option<i64>,
    #[arg(long)]
    #[serde(default)]
    pub skip_corrupt: bool,
}

#[derive(Debug, Args, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Sensor CSV to classify.
    #[arg(long)]
    pub sensors: Option<PathBuf>,
    /// Also write the emissions to this file, with a manifest beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub synth: SynthArgs,
    #[serde(default)]
    pub train: TrainArgs,
    #[serde(default)]
    pub eval: EvalArgs,
    #[serde(default)]
    pub infer: InferArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }
}

/// Fills every unset field of `flags` from `file`.
pub trait Overlay {
    fn overlay(self, file: Self) -> Self;
}

macro_rules! overlay {
    ($ty:ty { $($field:ident),* } $(flags { $($flag:ident),* })?) => {
        impl Overlay for $ty {
            fn overlay(self, file: Self) -> Self {
                Self {
                    $($field: self.$field.or(file.$field),)*
                    $($($flag: self.$flag || file.$flag,)*)?
                }
            }
        }
    };
}

overlay!(SynthArgs {
    out,
    participants,
    sessions,
    seed,
    noise_acc,
    noise_gyro,
    amplitude,
    sample_rate,
    duration,
    pivot_radius
});
overlay!(TrainArgs {
    data, out, variant, lr, batch, epochs, dropout, seed, patience, val_aliases, limited_k, window, step,
    gravity_samples, drop_axis, clock_offset_ms
} flags { skip_corrupt });
overlay!(EvalArgs { checkpoint, pipeline, data, out, aliases, clock_offset_ms } flags { skip_corrupt });
overlay!(InferArgs {
    checkpoint,
    pipeline,
    sensors,
    out
});
