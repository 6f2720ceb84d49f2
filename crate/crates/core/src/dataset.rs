//! Emotion labels, RAVDESS filename convention and deterministic splits.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("malformed RAVDESS filename {0:?}")]
    MalformedFilename(String),
    #[error("unknown emotion code {0:02}")]
    UnknownEmotionCode(u8),
    #[error("unknown emotion name {0:?}")]
    UnknownEmotionName(String),
    #[error("no examples to split")]
    EmptyInput,
    #[error("train fraction {0} is outside (0, 1]")]
    InvalidFraction(f64),
}

/// The eight RAVDESS speech emotions, in dataset code order (1 = neutral).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmotionLabel {
    Neutral,
    Calm,
    Happy,
    Sad,
    Angry,
    Fearful,
    Disgust,
    Surprised,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 8] = [
        EmotionLabel::Neutral,
        EmotionLabel::Calm,
        EmotionLabel::Happy,
        EmotionLabel::Sad,
        EmotionLabel::Angry,
        EmotionLabel::Fearful,
        EmotionLabel::Disgust,
        EmotionLabel::Surprised,
    ];

    pub const COUNT: usize = 8;

    /// Dataset code, 1..=8.
    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    /// Zero-based class index used by the classifier.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Result<Self, DatasetError> {
        match code {
            1..=8 => Ok(Self::ALL[usize::from(code - 1)]),
            _ => Err(DatasetError::UnknownEmotionCode(code)),
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Neutral => "neutral",
            Self::Calm => "calm",
            Self::Happy => "happy",
            Self::Sad => "sad",
            Self::Angry => "angry",
            Self::Fearful => "fearful",
            Self::Disgust => "disgust",
            Self::Surprised => "surprised",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| DatasetError::UnknownEmotionName(s.into()))
    }
}

/// Human-readable name of a classifier output; emotion names for the first
/// eight classes, `class<i>` beyond.
pub fn class_name(index: usize) -> String {
    match EmotionLabel::from_index(index) {
        Some(l) => l.name().into(),
        None => format!("class{index}"),
    }
}

/// The seven two-digit fields of a RAVDESS filename.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RavdessFields {
    pub modality: u8,
    pub vocal_channel: u8,
    pub emotion: EmotionLabel,
    pub intensity: u8,
    pub statement: u8,
    pub repetition: u8,
    pub actor: u8,
}

impl RavdessFields {
    /// Speech-only audio file for the given label and actor.
    pub fn speech(emotion: EmotionLabel, actor: u8) -> Self {
        Self {
            modality: 3,
            vocal_channel: 1,
            emotion,
            intensity: 1,
            statement: 1,
            repetition: 1,
            actor,
        }
    }

    pub fn file_name(&self) -> String {
        format!(
            "{:02}-{:02}-{:02}-{:02}-{:02}-{:02}-{:02}.wav",
            self.modality,
            self.vocal_channel,
            self.emotion.code(),
            self.intensity,
            self.statement,
            self.repetition,
            self.actor
        )
    }
}

/// Parses `MM-VV-EE-II-SS-RR-AA.wav`: the third field is the emotion, the seventh the actor.
pub fn parse_ravdess_fields(name: &str) -> Result<RavdessFields, DatasetError> {
    let malformed = || DatasetError::MalformedFilename(name.into());
    let stem = name.strip_suffix(".wav").ok_or_else(malformed)?;
    let mut fields = [0u8; 7];
    let mut count = 0;
    for part in stem.split('-') {
        if count == 7 || part.len() != 2 || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        fields[count] = part.parse().map_err(|_| malformed())?;
        count += 1;
    }
    if count != 7 {
        return Err(malformed());
    }
    Ok(RavdessFields {
        modality: fields[0],
        vocal_channel: fields[1],
        emotion: EmotionLabel::from_code(fields[2])?,
        intensity: fields[3],
        statement: fields[4],
        repetition: fields[5],
        actor: fields[6],
    })
}

pub fn parse_ravdess_filename(name: &str) -> Result<(EmotionLabel, u8), DatasetError> {
    parse_ravdess_fields(name).map(|f| (f.emotion, f.actor))
}

/// A train/validation partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub seed: u64,
}

fn check_fraction(train_fraction: f64) -> Result<(), DatasetError> {
    if train_fraction > 0.0 && train_fraction <= 1.0 {
        Ok(())
    } else {
        Err(DatasetError::InvalidFraction(train_fraction))
    }
}

fn train_count(n: usize, train_fraction: f64) -> usize {
    (libm::ceil(train_fraction * n as f64) as usize).min(n)
}

/// Per-class seeded shuffle; `ceil(f * n_c)` of each class go to train.
///
/// Classes are visited in label order and members keep their shuffled order,
/// so the result depends only on `(items, train_fraction, seed)`.
pub fn stratified_split<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> EmotionLabel,
    train_fraction: f64,
    seed: u64,
) -> Result<Split<T>, DatasetError> {
    if items.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    check_fraction(train_fraction)?;
    let mut by_class: BTreeMap<EmotionLabel, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(label_of(item)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        let cut = train_count(members.len(), train_fraction);
        train.extend(members[..cut].iter().map(|&i| items[i].clone()));
        validation.extend(members[cut..].iter().map(|&i| items[i].clone()));
    }
    Ok(Split {
        train,
        validation,
        seed,
    })
}

/// Speaker-disjoint variant: actors are shuffled and `ceil(f * n_actors)` of
/// them contribute all their files to train.
pub fn actor_disjoint_split<T: Clone>(
    items: &[T],
    actor_of: impl Fn(&T) -> u8,
    train_fraction: f64,
    seed: u64,
) -> Result<Split<T>, DatasetError> {
    if items.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    check_fraction(train_fraction)?;
    let mut actors: Vec<u8> = items.iter().map(&actor_of).collect();
    actors.sort_unstable();
    actors.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    actors.shuffle(&mut rng);
    let train_actors = &actors[..train_count(actors.len(), train_fraction)];
    let (train, validation) = items
        .iter()
        .cloned()
        .partition(|item| train_actors.contains(&actor_of(item)));
    Ok(Split {
        train,
        validation,
        seed,
    })
}
