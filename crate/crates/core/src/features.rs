//! Audio clip to network input: canonical rate, peak normalization,
//! log-mel spectrogram, then image adaptation.

use thiserror::Error;

use crate::audio::{canonicalize, AudioClip, AudioError, CANONICAL_SAMPLE_RATE};
use crate::dsp::{mel_spectrogram, DspError, MelSpectrogram, SpectrogramConfig};
use crate::nn::{spectrogram_to_input, InputAdapter, ResNetConfig, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// How audio becomes network input; stored in checkpoints so inference
/// reproduces the training pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSettings {
    pub sample_rate: u32,
    pub spectrogram: SpectrogramConfig,
    pub adapter: InputAdapter,
}

impl FeatureSettings {
    /// Default front end at the canonical rate, sized for `model`'s stem.
    pub fn for_model(model: &ResNetConfig) -> Self {
        Self {
            sample_rate: CANONICAL_SAMPLE_RATE,
            spectrogram: SpectrogramConfig::for_sample_rate(CANONICAL_SAMPLE_RATE),
            adapter: InputAdapter::new(model.in_channels, model.input_size),
        }
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<MelSpectrogram, FeatureError> {
        let clip = canonicalize(clip, self.sample_rate)?;
        Ok(mel_spectrogram(&clip, &self.spectrogram)?)
    }

    pub fn to_input(&self, spec: &MelSpectrogram) -> Tensor<f32> {
        spectrogram_to_input(spec, &self.adapter)
    }
}
