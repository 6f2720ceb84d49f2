//! Log-mel spectrogram front end: FFT, Hann-windowed STFT, HTK mel scale,
//! triangular filterbank, dB conversion and 8-bit rendering.

mod fft;
mod image;
mod mel;
mod stft;
mod window;

pub use fft::{fft, fft_in_place, ifft, FftPlan};
pub use image::{render_image, GrayImage};
pub use mel::{
    hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelFilterbank, MelSpectrogram,
};
pub use num_complex::Complex64;
pub use stft::{frame_count, stft};
pub use window::hann_window;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("FFT length {0} is not a power of two")]
    NonPowerOfTwoLength(usize),
    #[error("signal of {len} samples is shorter than one {n_fft}-sample frame")]
    SignalShorterThanFrame { len: usize, n_fft: usize },
    #[error("negative frequency {0}")]
    NegativeFrequency(f64),
    #[error("band [{fmin}, {fmax}] Hz is not inside (0, {nyquist}] Hz")]
    InvalidBandRange { fmin: f64, fmax: f64, nyquist: f64 },
    #[error("invalid spectrogram config: {0}")]
    InvalidConfig(&'static str),
    #[error("spectrogram data length {got} does not match {n_mels}x{n_frames}")]
    DataShape {
        n_mels: usize,
        n_frames: usize,
        got: usize,
    },
}

/// Frame, hop and band parameters for the log-mel front end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrogramConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub floor_db: f64,
}

impl SpectrogramConfig {
    /// Defaults for a given sample rate: 1024/256 framing, 128 bands up to Nyquist, -80 dB floor.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        Self {
            n_fft: 1024,
            hop: 256,
            n_mels: 128,
            fmin: 0.0,
            fmax: f64::from(sample_rate) / 2.0,
            floor_db: -80.0,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), DspError> {
        if !self.n_fft.is_power_of_two() {
            return Err(DspError::NonPowerOfTwoLength(self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(DspError::InvalidConfig("hop must satisfy 0 < hop <= n_fft"));
        }
        if self.n_mels < 2 {
            return Err(DspError::InvalidConfig("n_mels must be at least 2"));
        }
        if !self.floor_db.is_finite() {
            return Err(DspError::InvalidConfig("floor_db must be finite"));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(DspError::InvalidBandRange {
                fmin: self.fmin,
                fmax: self.fmax,
                nyquist,
            });
        }
        Ok(())
    }

    /// Stable textual form, used as part of feature cache keys.
    pub fn canonical_string(&self) -> alloc::string::String {
        alloc::format!(
            "n_fft={};hop={};n_mels={};fmin={:?};fmax={:?};floor_db={:?}",
            self.n_fft,
            self.hop,
            self.n_mels,
            self.fmin,
            self.fmax,
            self.floor_db
        )
    }
}
