//! The five subcommands. Each takes a resolved [`RunConfig`] and writes its
//! human-readable output to `out`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use deepemo_core::dataset::{EmotionLabel, Split};
use deepemo_core::dsp::{render_image, MelSpectrogram};
use deepemo_core::features::{FeatureError, FeatureSettings};
use deepemo_core::nn::{Checkpoint, CheckpointMeta, LoadMode, NnError, ResNet};
use deepemo_core::train::{evaluate, predict_topk, train, TrainConfig, TrainError, TrainExample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio_file::{read_wav, AudioFileError};
use crate::checkpoint_file::{self, CheckpointFileError};
use crate::config::{ConfigError, RunConfig};
use crate::dataset::{
    build_feature_cache, manifest_rows, scan_dataset, split_examples, DatasetIoError,
    LabeledExample,
};
use crate::image_file::write_image;
use crate::reports::{
    confusion_csv, metrics_writer, write_manifest, write_metrics_row, write_topk_text, TopKJson,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const LAST_CHECKPOINT: &str = "last.demo";
pub const BEST_CHECKPOINT: &str = "best.demo";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const SKIP_REPORT: &str = "skipped.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetIoError),
    #[error("audio: {0}")]
    Audio(#[from] AudioFileError),
    #[error("features: {0}")]
    Feature(#[from] FeatureError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointFileError),
    #[error("model: {0}")]
    Model(#[from] NnError),
    #[error("train: {0}")]
    Train(#[from] TrainError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical abort.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Train(TrainError::NonFiniteLoss { .. }) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

type Labeled = (LabeledExample, MelSpectrogram);

/// Scanned, featurized and split data.
pub struct Prepared {
    pub split: Split<Labeled>,
    pub computed: usize,
    pub cached: usize,
}

fn dataset_root(config: &RunConfig) -> Result<&Path, CliError> {
    config
        .dataset_root
        .as_deref()
        .ok_or_else(|| CliError::Usage("--dataset-root is required".into()))
}

/// scan -> cache -> split, reporting skips and failures on `out`. The split
/// runs over files whose features were extracted.
pub fn prepare(
    config: &RunConfig,
    settings: &FeatureSettings,
    out: &mut dyn Write,
) -> Result<Prepared, CliError> {
    let root = dataset_root(config)?;
    let scan = scan_dataset(root)?;
    for skip in &scan.skipped {
        writeln!(out, "{skip}").map_err(stdout_err)?;
    }
    let threads = config.deterministic.then_some(1);
    let report = build_feature_cache(&scan.examples, settings, &config.cache_dir, threads)?;
    for failure in &report.failures {
        writeln!(out, "ERROR {} {}", failure.path.display(), failure.reason).map_err(stdout_err)?;
    }
    let skip_path = config.cache_dir.join(SKIP_REPORT);
    let skip_text: String = scan.skipped.iter().map(|s| format!("{s}\n")).collect();
    fs::write(&skip_path, skip_text).map_err(io_err(&skip_path))?;
    let split = split_examples(
        &report.features,
        |(e, _)| e,
        config.train_fraction,
        config.seed,
        config.actor_disjoint,
    )
    .map_err(DatasetIoError::from)?;
    Ok(Prepared {
        split,
        computed: report.computed,
        cached: report.cached,
    })
}

pub fn cmd_features(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    config.validate()?;
    let settings = config.features();
    let prepared = prepare(config, &settings, out)?;
    let examples = |items: &[Labeled]| items.iter().map(|(e, _)| e.clone()).collect::<Vec<_>>();
    let split = Split {
        train: examples(&prepared.split.train),
        validation: examples(&prepared.split.validation),
        seed: prepared.split.seed,
    };
    let manifest = config.cache_dir.join(MANIFEST_FILE);
    let file = fs::File::create(&manifest).map_err(io_err(&manifest))?;
    write_manifest(file, &manifest_rows(&split))?;

    let mut counts: BTreeMap<EmotionLabel, (usize, usize)> = BTreeMap::new();
    for e in &split.train {
        counts.entry(e.label).or_default().0 += 1;
    }
    for e in &split.validation {
        counts.entry(e.label).or_default().1 += 1;
    }
    let mut w = || -> std::io::Result<()> {
        for (label, (train, val)) in &counts {
            writeln!(out, "{:<10} {train} train, {val} val", label.name())?;
        }
        writeln!(
            out,
            "{} computed, {} cached",
            prepared.computed, prepared.cached
        )?;
        writeln!(out, "manifest: {}", manifest.display())
    };
    w().map_err(stdout_err)
}

fn to_examples(
    items: &[Labeled],
    settings: &FeatureSettings,
    num_classes: usize,
) -> Result<Vec<TrainExample>, CliError> {
    items
        .iter()
        .map(|(e, spec)| {
            let label = e.label.index();
            if label >= num_classes {
                return Err(CliError::Usage(format!(
                    "{} has label {} but the model has only {num_classes} classes",
                    e.path.display(),
                    e.label
                )));
            }
            Ok(TrainExample {
                input: settings.to_input(spec),
                label,
            })
        })
        .collect()
}

/// Fresh model, or one initialized from `config.checkpoint`. A checkpoint
/// with a different head contributes its backbone only.
fn initial_model(config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<ResNet<f32>, CliError> {
    let target = config.model_config();
    let Some(path) = &config.checkpoint else {
        return Ok(ResNet::new(target, rng)?);
    };
    let checkpoint = checkpoint_file::load(path)?;
    if checkpoint.config.num_classes == target.num_classes {
        let mut model = ResNet::new(target, rng)?;
        model.load_state(&checkpoint.tensors, LoadMode::Strict)?;
        Ok(model)
    } else {
        Ok(checkpoint.backbone_into(target, rng)?)
    }
}

fn save_atomic(checkpoint: &Checkpoint, path: &Path) -> Result<(), CliError> {
    let tmp = path.with_extension("demo.tmp");
    checkpoint_file::save(checkpoint, &tmp)?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn cmd_train(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    config.validate()?;
    let settings = config.features();
    let prepared = prepare(config, &settings, out)?;
    let train_set = to_examples(&prepared.split.train, &settings, config.num_classes)?;
    let val_set = to_examples(&prepared.split.validation, &settings, config.num_classes)?;
    writeln!(
        out,
        "{} train, {} val examples",
        train_set.len(),
        val_set.len()
    )
    .map_err(stdout_err)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = initial_model(config, &mut rng)?;
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let meta = |epoch: usize| CheckpointMeta {
        epoch: epoch as u32,
        seed: config.seed,
        features: Some(settings),
    };
    let last = config.out_dir.join(LAST_CHECKPOINT);
    let best = config.out_dir.join(BEST_CHECKPOINT);
    save_atomic(&Checkpoint::from_model(&model, meta(0)), &last)?;

    let metrics_path = config.out_dir.join(METRICS_FILE);
    let file = fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut metrics = metrics_writer(file)?;

    let train_config = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        adam: config.adam(),
        seed: config.seed,
        freeze_backbone: config.freeze_backbone,
    };
    let mut best_score = f64::NEG_INFINITY;
    let mut clock = Instant::now();
    train(
        &mut model,
        &train_set,
        &val_set,
        &train_config,
        |m, model| -> Result<(), CliError> {
            write_metrics_row(&mut metrics, m)?;
            let checkpoint = Checkpoint::from_model(model, meta(m.epoch));
            save_atomic(&checkpoint, &last)?;
            // Best by validation accuracy, or by training accuracy without a validation split.
            let score = m.val_accuracy.unwrap_or(m.train_accuracy);
            if score > best_score {
                best_score = score;
                save_atomic(&checkpoint, &best)?;
            }
            let val = m
                .val_accuracy
                .map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            let mut line = format!(
                "epoch {}: train_acc {:.6} loss {:.6} val_acc {val}",
                m.epoch, m.train_accuracy, m.mean_loss
            );
            if !config.deterministic {
                line.push_str(&format!(" ({:.1}s)", clock.elapsed().as_secs_f64()));
                clock = Instant::now();
            }
            writeln!(out, "{line}").map_err(stdout_err)
        },
    )?;
    writeln!(out, "metrics: {}", metrics_path.display()).map_err(stdout_err)?;
    writeln!(out, "checkpoint: {}", last.display()).map_err(stdout_err)
}

fn load_for_inference(config: &RunConfig) -> Result<(ResNet<f32>, FeatureSettings), CliError> {
    let path = config
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Usage("--checkpoint is required".into()))?;
    let checkpoint = checkpoint_file::load(path)?;
    let model = checkpoint.to_model()?;
    let settings = checkpoint
        .meta
        .features
        .unwrap_or_else(|| config.features());
    Ok((model, settings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalSplit {
    Train,
    Val,
    All,
}

impl EvalSplit {
    fn name(self) -> &'static str {
        match self {
            EvalSplit::Train => "train",
            EvalSplit::Val => "val",
            EvalSplit::All => "all",
        }
    }
}

pub fn cmd_eval(config: &RunConfig, which: EvalSplit, out: &mut dyn Write) -> Result<(), CliError> {
    config.validate()?;
    let (model, settings) = load_for_inference(config)?;
    let prepared = prepare(config, &settings, out)?;
    let items: Vec<Labeled> = match which {
        EvalSplit::Train => prepared.split.train,
        EvalSplit::Val => prepared.split.validation,
        EvalSplit::All => prepared
            .split
            .train
            .into_iter()
            .chain(prepared.split.validation)
            .collect(),
    };
    let examples = to_examples(&items, &settings, model.num_classes())?;
    let result = evaluate(&model, &examples, config.batch_size)?;
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    let confusion_path = config
        .out_dir
        .join(format!("confusion_{}.csv", which.name()));
    let table = confusion_csv(&result.confusion);
    fs::write(&confusion_path, &table).map_err(io_err(&confusion_path))?;
    let mut w = || -> std::io::Result<()> {
        writeln!(out, "split: {} ({} examples)", which.name(), examples.len())?;
        writeln!(out, "accuracy: {:.6}", result.accuracy)?;
        writeln!(out, "mean_loss: {:.6}", result.mean_loss)?;
        write!(out, "{table}")?;
        writeln!(out, "confusion: {}", confusion_path.display())
    };
    w().map_err(stdout_err)
}

pub fn cmd_predict(
    config: &RunConfig,
    wav: &Path,
    k: usize,
    image: Option<&Path>,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    config.validate()?;
    let (model, settings) = load_for_inference(config)?;
    let clip = read_wav(wav)?;
    let (mut report, spec) = predict_topk(&model, &settings, &clip, k, &wav.display().to_string())?;
    let image_path = match image {
        Some(p) => p.to_path_buf(),
        None => {
            fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
            let stem = wav
                .file_stem()
                .map_or("input".into(), |s| s.to_string_lossy().into_owned());
            config.out_dir.join(format!("{stem}.mel.pgm"))
        }
    };
    write_image(&render_image(&spec), &image_path).map_err(io_err(&image_path))?;
    report.spectrogram_path = Some(image_path.display().to_string());
    if json {
        let text =
            serde_json::to_string_pretty(&TopKJson::from(&report)).expect("plain data serializes");
        writeln!(out, "{text}").map_err(stdout_err)
    } else {
        write_topk_text(out, &report).map_err(stdout_err)
    }
}

pub fn cmd_render(
    config: &RunConfig,
    wav: &Path,
    output: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    config.validate()?;
    let settings = config.features();
    let clip = read_wav(wav)?;
    let image = render_image(&settings.extract(&clip)?);
    write_image(&image, output).map_err(io_err(output))?;
    writeln!(
        out,
        "{} ({} frames x {} mel bands)",
        output.display(),
        image.width,
        image.height
    )
    .map_err(stdout_err)
}
