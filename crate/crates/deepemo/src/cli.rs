//! Argument parsing. Every run-config flag's id equals its config key, so a
//! flag is applied through [`RunConfig::set`] exactly like a file entry, and
//! only when it was actually given on the command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use deepemo_core::nn::Arch;

use crate::commands::{
    cmd_eval, cmd_features, cmd_predict, cmd_render, cmd_train, CliError, EvalSplit,
};
use crate::config::{RunConfig, CACHE_DIR_ENV};

fn defaults() -> RunConfig {
    RunConfig::default()
}

#[derive(Debug, Parser)]
#[command(
    name = "deepemo",
    version,
    about = "Speech emotion recognition from log-mel spectrograms with ResNet classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a dataset, cache log-mel spectrograms and write the split manifest.
    Features {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        spectrogram: SpectrogramArgs,
    },
    /// Train a classifier on cached features; writes metrics.csv and checkpoints.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        spectrogram: SpectrogramArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Evaluate a checkpoint on the train or validation split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint to evaluate.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Which part of the split to evaluate; seed and fraction must match training.
        #[arg(long, value_enum, default_value_t = EvalSplit::Val)]
        split: EvalSplit,
        /// Examples per forward pass.
        #[arg(long, default_value_t = defaults().batch_size)]
        batch_size: usize,
        /// Directory for the confusion matrix CSV.
        #[arg(long, default_value_os_t = defaults().out_dir)]
        out_dir: PathBuf,
    },
    /// Print the top-k emotions for one WAV file and render its spectrogram.
    Predict {
        /// Input WAV file.
        wav: PathBuf,
        /// Flat key = value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trained checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Number of classes to report.
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Spectrogram image path (.png or .pgm); defaults to <out-dir>/<stem>.mel.pgm.
        #[arg(long)]
        image: Option<PathBuf>,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
        /// Directory for the default spectrogram image.
        #[arg(long, default_value_os_t = defaults().out_dir)]
        out_dir: PathBuf,
    },
    /// Render the log-mel spectrogram of a WAV file as a PGM or PNG image.
    Render {
        /// Input WAV file.
        wav: PathBuf,
        /// Output image (.png or .pgm).
        output: PathBuf,
        /// Flat key = value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        spectrogram: SpectrogramArgs,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Flat key = value config file; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root of a RAVDESS-style directory tree.
    #[arg(long)]
    pub dataset_root: Option<PathBuf>,
    /// Feature cache directory.
    #[arg(long, env = CACHE_DIR_ENV, default_value_os_t = defaults().cache_dir)]
    pub cache_dir: PathBuf,
    /// Seed for the split, shuffling and initialization.
    #[arg(long, default_value_t = defaults().seed)]
    pub seed: u64,
    /// Fraction of each class used for training.
    #[arg(long, default_value_t = defaults().train_fraction)]
    pub train_fraction: f64,
    /// Split by speaker instead of by file.
    #[arg(long)]
    pub actor_disjoint: bool,
    /// Single-threaded feature extraction and no timing output.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    /// Audio is resampled to this rate before analysis.
    #[arg(long, default_value_t = defaults().sample_rate)]
    pub sample_rate: u32,
    /// STFT frame length, a power of two.
    #[arg(long, default_value_t = defaults().n_fft)]
    pub n_fft: usize,
    /// STFT hop in samples.
    #[arg(long, default_value_t = defaults().hop)]
    pub hop: usize,
    /// Number of mel bands.
    #[arg(long, default_value_t = defaults().n_mels)]
    pub n_mels: usize,
    /// Lower filterbank edge in Hz.
    #[arg(long, default_value_t = defaults().fmin)]
    pub fmin: f64,
    /// Upper filterbank edge in Hz [default: sample_rate / 2].
    #[arg(long)]
    pub fmax: Option<f64>,
    /// Log-power floor in dB.
    #[arg(long, default_value_t = defaults().floor_db, allow_negative_numbers = true)]
    pub floor_db: f64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// resnet18 or resnet_tiny.
    #[arg(long, default_value_t = defaults().arch)]
    pub arch: Arch,
    /// Width of the classifier head.
    #[arg(long, default_value_t = defaults().num_classes)]
    pub num_classes: usize,
    /// Network input side length [default: 224 for resnet18, 64 for resnet_tiny].
    #[arg(long)]
    pub input_size: Option<usize>,
    /// Apply ImageNet mean/std normalization to the input.
    #[arg(long)]
    pub imagenet_norm: bool,
    /// Initial weights; a checkpoint with a different head contributes its backbone only.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Train only the final linear layer.
    #[arg(long)]
    pub freeze_backbone: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = defaults().epochs)]
    pub epochs: usize,
    /// Examples per Adam step.
    #[arg(long, default_value_t = defaults().batch_size)]
    pub batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = defaults().lr)]
    pub lr: f64,
    /// Directory for metrics.csv, last.demo and best.demo.
    #[arg(long, default_value_os_t = defaults().out_dir)]
    pub out_dir: PathBuf,
}

fn raw_value(m: &ArgMatches, id: &str) -> Option<String> {
    let mut values = m.try_get_raw(id).ok()??;
    values.next().map(|v| v.to_string_lossy().into_owned())
}

fn apply_source(
    config: &mut RunConfig,
    m: &ArgMatches,
    source: ValueSource,
) -> Result<(), CliError> {
    for key in RunConfig::KEYS {
        if m.try_contains_id(key).unwrap_or(false) && m.value_source(key) == Some(source) {
            if let Some(value) = raw_value(m, key) {
                config.set(key, &value)?;
            }
        }
    }
    Ok(())
}

/// defaults < environment < config file < command-line flags.
pub fn resolve_config(m: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    apply_source(&mut config, m, ValueSource::EnvVariable)?;
    if let Some(path) = m.try_get_one::<PathBuf>("config").ok().flatten() {
        config.apply_file(path)?;
    }
    apply_source(&mut config, m, ValueSource::CommandLine)?;
    Ok(config)
}

pub fn dispatch(command: &Command, m: &ArgMatches, out: &mut dyn Write) -> Result<(), CliError> {
    let config = resolve_config(m)?;
    match command {
        Command::Features { .. } => cmd_features(&config, out),
        Command::Train { .. } => cmd_train(&config, out),
        Command::Eval { split, .. } => cmd_eval(&config, *split, out),
        Command::Predict {
            wav,
            k,
            image,
            json,
            ..
        } => cmd_predict(&config, wav, *k, image.as_deref(), *json, out),
        Command::Render { wav, output, .. } => cmd_render(&config, wav, output, out),
    }
}

pub enum Outcome {
    /// Help or version text; exit 0.
    Info(clap::Error),
    Usage(clap::Error),
    Failed(CliError),
    Done,
}

/// Parses `args` and runs the selected subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if e.use_stderr() => return Outcome::Usage(e),
        Err(e) => return Outcome::Info(e),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => return Outcome::Usage(e),
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match dispatch(&cli.command, sub, out) {
        Ok(()) => Outcome::Done,
        Err(e) => Outcome::Failed(e),
    }
}
