//! Directory scanning and the on-disk feature cache.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use deepemo_core::dataset::{
    actor_disjoint_split, parse_ravdess_filename, stratified_split, EmotionLabel, Split,
};
use deepemo_core::dsp::MelSpectrogram;
use deepemo_core::features::FeatureSettings;
use deepemo_core::hash::Fnv1a;
use deepemo_core::DatasetError;
use rayon::prelude::*;
use thiserror::Error;
use walkdir::WalkDir;

use crate::audio_file::read_wav;
use crate::mspc;
use crate::reports::ManifestRow;

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("dataset directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("no parsable .wav files under {root} ({skipped} skipped)")]
    EmptyDataset { root: PathBuf, skipped: usize },
    #[error("walking {root}: {source}")]
    Walk {
        root: PathBuf,
        source: walkdir::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("feature extraction failed for all {0} files")]
    NoFeatures(usize),
    #[error(transparent)]
    Split(#[from] DatasetError),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LabeledExample {
    pub path: PathBuf,
    pub label: EmotionLabel,
    pub actor: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipEntry {
    pub path: PathBuf,
    pub reason: String,
}

impl fmt::Display for SkipEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SKIP {} {}", self.path.display(), self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scan {
    /// Sorted by path.
    pub examples: Vec<LabeledExample>,
    pub skipped: Vec<SkipEntry>,
}

fn is_wav(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Recursively collects `.wav` files whose names parse as RAVDESS names.
/// Other `.wav` files are reported and skipped.
pub fn scan_dataset(root: &Path) -> Result<Scan, DatasetIoError> {
    if !root.is_dir() {
        return Err(DatasetIoError::MissingDirectory(root.to_path_buf()));
    }
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|source| DatasetIoError::Walk {
            root: root.to_path_buf(),
            source,
        })?;
        if !entry.file_type().is_file() || !is_wav(entry.path()) {
            continue;
        }
        let name = entry.file_name().to_string_lossy();
        match parse_ravdess_filename(&name) {
            Ok((label, actor)) => examples.push(LabeledExample {
                path: entry.into_path(),
                label,
                actor,
            }),
            Err(e) => skipped.push(SkipEntry {
                path: entry.into_path(),
                reason: e.to_string(),
            }),
        }
    }
    examples.sort();
    skipped.sort_by(|a, b| a.path.cmp(&b.path));
    if examples.is_empty() {
        return Err(DatasetIoError::EmptyDataset {
            root: root.to_path_buf(),
            skipped: skipped.len(),
        });
    }
    Ok(Scan { examples, skipped })
}

/// Stratified by emotion, or speaker-disjoint when `actor_disjoint` is set.
pub fn split_examples<T: Clone>(
    items: &[T],
    example_of: impl Fn(&T) -> &LabeledExample,
    train_fraction: f64,
    seed: u64,
    actor_disjoint: bool,
) -> Result<Split<T>, DatasetError> {
    if actor_disjoint {
        actor_disjoint_split(items, |t| example_of(t).actor, train_fraction, seed)
    } else {
        stratified_split(items, |t| example_of(t).label, train_fraction, seed)
    }
}

pub fn manifest_rows(split: &Split<LabeledExample>) -> Vec<ManifestRow> {
    let row = |e: &LabeledExample, split: &str| ManifestRow {
        path: e.path.display().to_string(),
        label_code: e.label.code(),
        label_name: e.label.name().into(),
        actor: e.actor,
        split: split.into(),
    };
    let mut rows: Vec<ManifestRow> = split
        .train
        .iter()
        .map(|e| row(e, "train"))
        .chain(split.validation.iter().map(|e| row(e, "val")))
        .collect();
    rows.sort_by(|a, b| a.path.cmp(&b.path));
    rows
}

/// FNV-1a over the path, then every setting that shapes the features.
pub fn cache_key(path: &Path, settings: &FeatureSettings) -> u64 {
    let mut h = Fnv1a::new();
    h.update(path.to_string_lossy().as_bytes());
    h.update(&[0]);
    h.update(
        format!(
            "sr={};{}",
            settings.sample_rate,
            settings.spectrogram.canonical_string()
        )
        .as_bytes(),
    );
    h.finish()
}

pub fn cache_file(cache_dir: &Path, path: &Path, settings: &FeatureSettings) -> PathBuf {
    cache_dir.join(format!("{:016x}.mspc", cache_key(path, settings)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheFailure {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheReport {
    /// Successful examples with their spectrograms, in input order.
    pub features: Vec<(LabeledExample, MelSpectrogram)>,
    pub failures: Vec<CacheFailure>,
    pub computed: usize,
    pub cached: usize,
}

enum Outcome {
    Cached(MelSpectrogram),
    Computed(MelSpectrogram),
    Failed(String),
}

fn load_or_compute(
    example: &LabeledExample,
    settings: &FeatureSettings,
    cache_dir: &Path,
) -> Outcome {
    let file = cache_file(cache_dir, &example.path, settings);
    if let Ok(bytes) = fs::read(&file) {
        if let Ok(spec) = mspc::decode(&bytes, &settings.spectrogram) {
            if spec.sample_rate() == settings.sample_rate {
                return Outcome::Cached(spec);
            }
        }
    }
    let spec = match read_wav(&example.path) {
        Ok(clip) => match settings.extract(&clip) {
            Ok(spec) => spec,
            Err(e) => return Outcome::Failed(e.to_string()),
        },
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    // Write-then-rename keeps a concurrent reader from seeing half a file.
    let tmp = file.with_extension(format!("mspc.tmp{}", std::process::id()));
    match fs::write(&tmp, mspc::encode(&spec)).and_then(|_| fs::rename(&tmp, &file)) {
        Ok(()) => Outcome::Computed(spec),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Outcome::Failed(format!("writing {}: {e}", file.display()))
        }
    }
}

/// Computes or loads the log-mel spectrogram of every example. Files are
/// processed on `threads` workers (all cores when `None`); the report is in
/// input order either way. Fails only when no file succeeds.
pub fn build_feature_cache(
    examples: &[LabeledExample],
    settings: &FeatureSettings,
    cache_dir: &Path,
    threads: Option<usize>,
) -> Result<CacheReport, DatasetIoError> {
    fs::create_dir_all(cache_dir).map_err(|source| DatasetIoError::Io {
        path: cache_dir.to_path_buf(),
        source,
    })?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let outcomes: Vec<Outcome> = builder.build()?.install(|| {
        examples
            .par_iter()
            .map(|e| load_or_compute(e, settings, cache_dir))
            .collect()
    });
    let mut report = CacheReport {
        features: Vec::new(),
        failures: Vec::new(),
        computed: 0,
        cached: 0,
    };
    for (example, outcome) in examples.iter().zip(outcomes) {
        match outcome {
            Outcome::Cached(spec) => {
                report.cached += 1;
                report.features.push((example.clone(), spec));
            }
            Outcome::Computed(spec) => {
                report.computed += 1;
                report.features.push((example.clone(), spec));
            }
            Outcome::Failed(reason) => report.failures.push(CacheFailure {
                path: example.path.clone(),
                reason,
            }),
        }
    }
    if report.features.is_empty() && !examples.is_empty() {
        return Err(DatasetIoError::NoFeatures(examples.len()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_file::write_wav_pcm16;
    use deepemo_core::dataset::RavdessFields;
    use deepemo_core::nn::Arch;
    use deepemo_core::synth::tone_with;

    fn settings() -> FeatureSettings {
        let mut s = FeatureSettings::for_model(&Arch::ResNetTiny.config(8));
        s.spectrogram.n_mels = 32;
        s
    }

    fn write_tone(dir: &Path, label: EmotionLabel, actor: u8) -> PathBuf {
        let path = dir.join(RavdessFields::speech(label, actor).file_name());
        write_wav_pcm16(
            &path,
            &tone_with(label.index(), u32::from(actor), 22_050, 4096),
        )
        .unwrap();
        path
    }

    #[test]
    fn scan_sorts_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("Actor_02")).unwrap();
        write_tone(&dir.path().join("Actor_02"), EmotionLabel::Sad, 2);
        write_tone(dir.path(), EmotionLabel::Calm, 1);
        fs::write(dir.path().join("notes.wav"), b"x").unwrap();
        fs::write(dir.path().join("readme.txt"), b"x").unwrap();
        let scan = scan_dataset(dir.path()).unwrap();
        assert_eq!(scan.examples.len(), 2);
        assert!(scan.examples.windows(2).all(|w| w[0].path < w[1].path));
        assert_eq!(scan.skipped.len(), 1);
        assert!(scan.skipped[0].to_string().starts_with("SKIP "));
        assert_eq!(scan_dataset(dir.path()).unwrap(), scan);
    }

    #[test]
    fn scan_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            scan_dataset(dir.path()),
            Err(DatasetIoError::EmptyDataset { .. })
        ));
        assert!(matches!(
            scan_dataset(&dir.path().join("nope")),
            Err(DatasetIoError::MissingDirectory(_))
        ));
    }

    #[test]
    fn cache_is_reused_and_keyed_by_config() {
        let data = tempfile::tempdir().unwrap();
        let cache = tempfile::tempdir().unwrap();
        for (i, label) in EmotionLabel::ALL.iter().take(4).enumerate() {
            write_tone(data.path(), *label, i as u8 + 1);
        }
        fs::write(
            data.path().join("03-01-05-01-01-01-09.wav"),
            b"RIFF garbage",
        )
        .unwrap();
        let scan = scan_dataset(data.path()).unwrap();
        assert_eq!(scan.examples.len(), 5);

        let cold = build_feature_cache(&scan.examples, &settings(), cache.path(), Some(2)).unwrap();
        assert_eq!((cold.computed, cold.cached, cold.failures.len()), (4, 0, 1));
        let warm = build_feature_cache(&scan.examples, &settings(), cache.path(), None).unwrap();
        assert_eq!((warm.computed, warm.cached), (0, 4));
        assert_eq!(warm.features, cold.features);

        let mut other = settings();
        other.spectrogram.hop = 128;
        let miss = build_feature_cache(&scan.examples, &other, cache.path(), None).unwrap();
        assert_eq!((miss.computed, miss.cached), (4, 0));
        assert_ne!(
            cache_key(&scan.examples[0].path, &settings()),
            cache_key(&scan.examples[0].path, &other)
        );
    }

    #[test]
    fn all_failures_is_an_error() {
        let data = tempfile::tempdir().unwrap();
        let cache = tempfile::tempdir().unwrap();
        fs::write(data.path().join("03-01-05-01-01-01-09.wav"), b"RIFF").unwrap();
        let scan = scan_dataset(data.path()).unwrap();
        assert!(matches!(
            build_feature_cache(&scan.examples, &settings(), cache.path(), None),
            Err(DatasetIoError::NoFeatures(1))
        ));
    }
}
