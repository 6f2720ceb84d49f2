//! Allocation-only building blocks for speech emotion recognition.
//!
//! The crate turns raw PCM audio into log-mel spectrogram "images" and
//! classifies them with a residual convolutional network trained by Adam on a
//! softmax cross-entropy objective. Everything here is pure computation over
//! owned buffers; file system access, caching and the command line live in the
//! `deepemo` companion crate.
//!
//! Layout:
//!
//! - [`audio`]: WAV decoding from bytes, downmix, resampling, peak normalization.
//! - [`dsp`]: radix-2 FFT, Hann window, STFT, mel filterbank, log-mel spectrogram, rendering.
//! - [`features`]: the audio-to-network-input pipeline shared by training and inference.
//! - [`dataset`]: emotion labels, RAVDESS filename parsing, stratified splits.
//! - [`nn`]: tensors, layer kernels with hand-written backward passes, ResNet graphs, Adam.
//! - [`train`]: training loop, evaluation, confusion matrix and top-k reports.
//! - [`synth`]: deterministic synthetic tone corpus used for overfit checks.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod audio;
pub mod dataset;
pub mod dsp;
pub mod features;
pub mod hash;
pub mod nn;
pub mod synth;
pub mod train;

pub use audio::{AudioClip, AudioError};
pub use dataset::{DatasetError, EmotionLabel, Split};
pub use dsp::{DspError, MelSpectrogram, SpectrogramConfig};
pub use features::FeatureSettings;
pub use nn::{NnError, Tensor};
pub use train::{EpochMetrics, TrainError};
