//! Deterministic synthetic tones: class `i` is a harmonic tone at
//! `300 + 150 i` Hz. Used as a linearly separable overfit fixture.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioClip, CANONICAL_SAMPLE_RATE};
use crate::dataset::EmotionLabel;
use crate::features::{FeatureError, FeatureSettings};
use crate::train::TrainExample;

const HARMONICS: [f64; 3] = [1.0, 0.5, 0.25];

pub fn class_frequency(class: usize) -> f64 {
    300.0 + 150.0 * class as f64
}

/// One second of the class tone at the canonical rate. `variant` 0 is the
/// clean reference tone; other variants shift phase and level and add a
/// little seeded noise.
pub fn tone(class: usize, variant: u32) -> AudioClip {
    tone_with(
        class,
        variant,
        CANONICAL_SAMPLE_RATE,
        CANONICAL_SAMPLE_RATE as usize,
    )
}

pub fn tone_with(class: usize, variant: u32, sample_rate: u32, len: usize) -> AudioClip {
    let f0 = class_frequency(class);
    let phase = f64::from(variant) * 0.7;
    let level = 0.8 - 0.1 * f64::from(variant % 4);
    let noise = if variant == 0 { 0.0 } else { 0.01 };
    let mut rng = ChaCha8Rng::seed_from_u64(((class as u64) << 32) | u64::from(variant));
    let norm: f64 = HARMONICS.iter().sum();
    let samples: Vec<f32> = (0..len)
        .map(|i| {
            let t = i as f64 / f64::from(sample_rate);
            let s: f64 = HARMONICS
                .iter()
                .enumerate()
                .map(|(h, a)| a * libm::sin(2.0 * PI * f0 * (h + 1) as f64 * t + phase))
                .sum();
            let n = if noise > 0.0 {
                rng.gen_range(-noise..noise)
            } else {
                0.0
            };
            (level * s / norm + n) as f32
        })
        .collect();
    AudioClip::new(samples, sample_rate).expect("non-empty synthetic clip")
}

/// `per_class` tones for each of the eight emotions, in label order.
pub fn tone_corpus(per_class: u32) -> Vec<(EmotionLabel, AudioClip)> {
    EmotionLabel::ALL
        .into_iter()
        .flat_map(|label| (0..per_class).map(move |v| (label, tone(label.index(), v))))
        .collect()
}

/// Network inputs for `tone_corpus(per_class)`: the overfit fixture when
/// `per_class` is 1.
pub fn tone_examples(
    settings: &FeatureSettings,
    per_class: u32,
) -> Result<Vec<TrainExample>, FeatureError> {
    tone_corpus(per_class)
        .into_iter()
        .map(|(label, clip)| {
            let spec = settings.extract(&clip)?;
            Ok(TrainExample {
                input: settings.to_input(&spec),
                label: label.index(),
            })
        })
        .collect()
}
