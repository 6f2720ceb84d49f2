//! Run configuration. Sources are layered: built-in defaults, then
//! `DEEPEMO_CACHE_DIR`, then a flat `key = value` file, then flags given on
//! the command line. Keys match the long flag names; `-` and `_` are
//! interchangeable.

use std::path::{Path, PathBuf};

use deepemo_core::audio::CANONICAL_SAMPLE_RATE;
use deepemo_core::dsp::SpectrogramConfig;
use deepemo_core::features::FeatureSettings;
use deepemo_core::nn::{AdamConfig, Arch, InputAdapter, ResNetConfig};
use thiserror::Error;

pub const CACHE_DIR_ENV: &str = "DEEPEMO_CACHE_DIR";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{file}:{line}: expected key = value")]
    Syntax { file: String, line: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_root: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
    pub floor_db: f64,
    pub arch: Arch,
    pub num_classes: usize,
    /// `None` uses the architecture's native input size.
    pub input_size: Option<usize>,
    pub imagenet_norm: bool,
    pub checkpoint: Option<PathBuf>,
    pub freeze_backbone: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub actor_disjoint: bool,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = SpectrogramConfig::for_sample_rate(CANONICAL_SAMPLE_RATE);
        Self {
            dataset_root: None,
            cache_dir: PathBuf::from("deepemo-cache"),
            out_dir: PathBuf::from("deepemo-out"),
            sample_rate: CANONICAL_SAMPLE_RATE,
            n_fft: spec.n_fft,
            hop: spec.hop,
            n_mels: spec.n_mels,
            fmin: spec.fmin,
            fmax: None,
            floor_db: spec.floor_db,
            arch: Arch::ResNet18,
            num_classes: 8,
            input_size: None,
            imagenet_norm: false,
            checkpoint: None,
            freeze_backbone: false,
            epochs: 50,
            batch_size: 16,
            lr: AdamConfig::default().lr,
            seed: 0,
            train_fraction: 0.8,
            actor_disjoint: false,
            deterministic: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| ConfigError::InvalidValue {
            key: key.into(),
            value: value.into(),
            reason: e.to_string(),
        })
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match value {
        "" | "auto" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 23] = [
        "dataset_root",
        "cache_dir",
        "out_dir",
        "sample_rate",
        "n_fft",
        "hop",
        "n_mels",
        "fmin",
        "fmax",
        "floor_db",
        "arch",
        "num_classes",
        "input_size",
        "imagenet_norm",
        "checkpoint",
        "freeze_backbone",
        "epochs",
        "batch_size",
        "lr",
        "seed",
        "train_fraction",
        "actor_disjoint",
        "deterministic",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "dataset_root" => self.dataset_root = Some(PathBuf::from(value)),
            "cache_dir" => self.cache_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "sample_rate" => self.sample_rate = parse(k, value)?,
            "n_fft" => self.n_fft = parse(k, value)?,
            "hop" => self.hop = parse(k, value)?,
            "n_mels" => self.n_mels = parse(k, value)?,
            "fmin" => self.fmin = parse(k, value)?,
            "fmax" => self.fmax = optional(k, value)?,
            "floor_db" => self.floor_db = parse(k, value)?,
            "arch" => self.arch = parse(k, value)?,
            "num_classes" => self.num_classes = parse(k, value)?,
            "input_size" => self.input_size = optional(k, value)?,
            "imagenet_norm" => self.imagenet_norm = parse(k, value)?,
            "checkpoint" => self.checkpoint = optional::<PathBuf>(k, value)?,
            "freeze_backbone" => self.freeze_backbone = parse(k, value)?,
            "epochs" => self.epochs = parse(k, value)?,
            "batch_size" => self.batch_size = parse(k, value)?,
            "lr" => self.lr = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "train_fraction" => self.train_fraction = parse(k, value)?,
            "actor_disjoint" => self.actor_disjoint = parse(k, value)?,
            "deterministic" => self.deterministic = parse(k, value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are ignored.
    pub fn apply_file_text(&mut self, text: &str, file: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                file: file.into(),
                line: i + 1,
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("reading config {}: {e}", path.display())))?;
        self.apply_file_text(&text, &path.display().to_string())
    }

    pub fn spectrogram(&self) -> SpectrogramConfig {
        SpectrogramConfig {
            n_fft: self.n_fft,
            hop: self.hop,
            n_mels: self.n_mels,
            fmin: self.fmin,
            fmax: self.fmax.unwrap_or(f64::from(self.sample_rate) / 2.0),
            floor_db: self.floor_db,
        }
    }

    pub fn model_config(&self) -> ResNetConfig {
        let mut config = self.arch.config(self.num_classes);
        if let Some(size) = self.input_size {
            config.input_size = size;
        }
        config
    }

    pub fn features(&self) -> FeatureSettings {
        let model = self.model_config();
        FeatureSettings {
            sample_rate: self.sample_rate,
            spectrogram: self.spectrogram(),
            adapter: InputAdapter {
                imagenet_norm: self.imagenet_norm,
                ..InputAdapter::new(model.in_channels, model.input_size)
            },
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!(
                "train_fraction must be in (0, 1], got {}",
                self.train_fraction
            ));
        }
        self.spectrogram()
            .validate(self.sample_rate)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.model_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_recipe() {
        let c = RunConfig::default();
        assert_eq!(c.lr, 3e-5);
        assert_eq!(c.num_classes, 8);
        assert_eq!(c.arch, Arch::ResNet18);
        assert_eq!(c.spectrogram(), SpectrogramConfig::for_sample_rate(22_050));
        assert_eq!(c.model_config().input_size, 224);
        c.validate().unwrap();
    }

    #[test]
    fn file_parsing() {
        let mut c = RunConfig::default();
        c.apply_file_text(
            "# run\nepochs = 3\nbatch-size=4   # small\n\narch = resnet_tiny\nfmax = 8000\n",
            "f",
        )
        .unwrap();
        assert_eq!(
            (c.epochs, c.batch_size, c.arch, c.fmax),
            (3, 4, Arch::ResNetTiny, Some(8000.0))
        );
        assert_eq!(c.model_config().input_size, 64);
        assert_eq!(
            c.apply_file_text("epochs\n", "f"),
            Err(ConfigError::Syntax {
                file: "f".into(),
                line: 1
            })
        );
        assert_eq!(
            c.set("colour", "red"),
            Err(ConfigError::UnknownKey("colour".into()))
        );
        assert!(matches!(
            c.set("epochs", "-1"),
            Err(ConfigError::InvalidValue { .. })
        ));
    }

    #[test]
    fn every_key_is_settable() {
        let mut c = RunConfig::default();
        for key in RunConfig::KEYS {
            let value = match key {
                "arch" => "resnet18",
                "imagenet_norm" | "freeze_backbone" | "actor_disjoint" | "deterministic" => "true",
                "dataset_root" | "cache_dir" | "out_dir" | "checkpoint" => "x",
                "fmin" | "fmax" | "floor_db" | "lr" | "train_fraction" => "0.5",
                _ => "7",
            };
            c.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn validation() {
        for c in [
            RunConfig {
                lr: 0.0,
                ..Default::default()
            },
            RunConfig {
                train_fraction: 1.5,
                ..Default::default()
            },
            RunConfig {
                n_fft: 1000,
                ..Default::default()
            },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
