use alloc::vec;
use alloc::vec::Vec;

use super::stft::stft_with;
use super::{hann_window, DspError, FftPlan, SpectrogramConfig};
use crate::audio::AudioClip;

const POWER_EPS: f64 = 1e-10;

/// HTK mel scale: `2595 log10(1 + f/700)`.
pub fn hz_to_mel(hz: f64) -> Result<f64, DspError> {
    if hz < 0.0 || hz.is_nan() {
        return Err(DspError::NegativeFrequency(hz));
    }
    Ok(2595.0 * libm::log10(1.0 + hz / 700.0))
}

pub fn mel_to_hz(mel: f64) -> Result<f64, DspError> {
    if mel < 0.0 || mel.is_nan() {
        return Err(DspError::NegativeFrequency(mel));
    }
    Ok(700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0))
}

/// Dense `n_mels x (n_fft/2 + 1)` matrix of peak-normalized triangular filters.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_mels: usize,
    n_bins: usize,
    weights: Vec<f64>,
    /// Per-row `[first, last)` range of nonzero columns.
    support: Vec<(usize, usize)>,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_bins..(i + 1) * self.n_bins]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.n_bins + col]
    }

    /// The `n_mels + 2` band edges in Hz.
    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    /// Filterbank energies of one power spectrum, accumulated in f64.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate().take(self.n_mels) {
            let (lo, hi) = self.support[i];
            let row = self.row(i);
            *slot = (lo..hi).map(|k| row[k] * power[k]).sum();
        }
    }
}

pub fn mel_filterbank(
    config: &SpectrogramConfig,
    sample_rate: u32,
) -> Result<MelFilterbank, DspError> {
    config.validate(sample_rate)?;
    let n_bins = config.n_bins();
    let n_mels = config.n_mels;
    let mel_lo = hz_to_mel(config.fmin)?;
    let mel_hi = hz_to_mel(config.fmax)?;
    let edges_hz = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect::<Result<Vec<_>, _>>()?;

    let bin_hz = f64::from(sample_rate) / config.n_fft as f64;
    let mut weights = vec![0.0; n_mels * n_bins];
    let mut support = Vec::with_capacity(n_mels);
    for i in 0..n_mels {
        let (left, centre, right) = (edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]);
        let (mut first, mut last) = (n_bins, 0);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let rising = (f - left) / (centre - left);
            let falling = (right - f) / (right - centre);
            let w = rising.min(falling).max(0.0);
            if w > 0.0 {
                weights[i * n_bins + k] = w;
                first = first.min(k);
                last = k + 1;
            }
        }
        support.push(if first < last { (first, last) } else { (0, 0) });
    }
    Ok(MelFilterbank {
        n_mels,
        n_bins,
        weights,
        support,
        edges_hz,
    })
}

/// Log-mel energies in dB, `n_mels x n_frames`, row-major (row = mel band).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f32>,
    n_mels: usize,
    n_frames: usize,
    config: SpectrogramConfig,
    sample_rate: u32,
}

impl MelSpectrogram {
    pub fn from_parts(
        data: Vec<f32>,
        n_mels: usize,
        n_frames: usize,
        config: SpectrogramConfig,
        sample_rate: u32,
    ) -> Result<Self, DspError> {
        if data.len() != n_mels * n_frames {
            return Err(DspError::DataShape {
                n_mels,
                n_frames,
                got: data.len(),
            });
        }
        Ok(Self {
            data,
            n_mels,
            n_frames,
            config,
            sample_rate,
        })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn get(&self, mel: usize, frame: usize) -> f32 {
        self.data[mel * self.n_frames + frame]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Power spectrogram through the mel filterbank, then `10 log10(p + 1e-10)`
/// clamped below at `floor_db`.
pub fn mel_spectrogram(
    clip: &AudioClip,
    config: &SpectrogramConfig,
) -> Result<MelSpectrogram, DspError> {
    let sample_rate = clip.sample_rate();
    let bank = mel_filterbank(config, sample_rate)?;
    let plan = FftPlan::new(config.n_fft)?;
    let frames = stft_with(
        clip.samples(),
        config.hop,
        &plan,
        &hann_window(config.n_fft),
    )?;

    let n_frames = frames.len();
    let n_bins = config.n_bins();
    let mut data = vec![0.0f32; config.n_mels * n_frames];
    let mut power = vec![0.0f64; n_bins];
    let mut energies = vec![0.0f64; config.n_mels];
    for (f, frame) in frames.iter().enumerate() {
        for (p, c) in power.iter_mut().zip(&frame[..n_bins]) {
            *p = c.norm_sqr();
        }
        bank.apply(&power, &mut energies);
        for (m, &e) in energies.iter().enumerate() {
            let db = (10.0 * libm::log10(e + POWER_EPS)).max(config.floor_db);
            data[m * n_frames + f] = db as f32;
        }
    }
    MelSpectrogram::from_parts(data, config.n_mels, n_frames, *config, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn small_config() -> SpectrogramConfig {
        SpectrogramConfig {
            n_fft: 512,
            hop: 256,
            n_mels: 4,
            fmin: 0.0,
            fmax: 11_025.0,
            floor_db: -80.0,
        }
    }

    #[test]
    fn mel_closed_forms() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        let m = hz_to_mel(700.0).unwrap();
        assert!((m - 2595.0 * 2f64.log10()).abs() < 1e-9);
        assert!((m - 781.17).abs() < 0.01);
        for f in [50.0, 440.0, 8000.0] {
            let back = mel_to_hz(hz_to_mel(f).unwrap()).unwrap();
            assert!(((back - f) / f).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_frequencies_rejected() {
        assert_eq!(hz_to_mel(-1.0), Err(DspError::NegativeFrequency(-1.0)));
        assert_eq!(mel_to_hz(-3.0), Err(DspError::NegativeFrequency(-3.0)));
    }

    #[test]
    fn filterbank_shape_and_positivity() {
        let cfg = SpectrogramConfig::for_sample_rate(22_050);
        let bank = mel_filterbank(&cfg, 22_050).unwrap();
        assert_eq!((bank.n_mels(), bank.n_bins()), (128, 513));
        for i in 0..bank.n_mels() {
            let row = bank.row(i);
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(row.iter().any(|&w| w > 0.0), "row {i} is empty");
        }
    }

    #[test]
    fn filterbank_rows_peak_at_centre_edge() {
        let cfg = small_config();
        let bank = mel_filterbank(&cfg, 22_050).unwrap();
        let top = hz_to_mel(11_025.0).unwrap();
        let bin_hz = 22_050.0 / 512.0;
        for i in 0..4 {
            let centre = mel_to_hz(top * (i + 1) as f64 / 5.0).unwrap();
            let nearest = (centre / bin_hz).round() as usize;
            let row = bank.row(i);
            let argmax = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            assert_eq!(argmax, nearest, "row {i}");
        }
    }

    #[test]
    fn filterbank_rows_are_unimodal() {
        let bank = mel_filterbank(&SpectrogramConfig::for_sample_rate(22_050), 22_050).unwrap();
        for i in 0..bank.n_mels() {
            let row = bank.row(i);
            let mut falling = false;
            for w in row.windows(2) {
                if w[1] < w[0] {
                    falling = true;
                } else if falling {
                    assert!(w[1] <= w[0], "row {i} rises after falling");
                }
            }
        }
    }

    #[test]
    fn band_above_nyquist_rejected() {
        let cfg = SpectrogramConfig {
            fmax: 12_000.0,
            ..small_config()
        };
        assert!(matches!(
            mel_filterbank(&cfg, 22_050),
            Err(DspError::InvalidBandRange { .. })
        ));
    }

    #[test]
    fn silence_sits_on_the_floor() {
        let cfg = small_config();
        let clip = AudioClip::new(vec![0.0; 2048], 22_050).unwrap();
        let spec = mel_spectrogram(&clip, &cfg).unwrap();
        assert_eq!((spec.n_mels(), spec.n_frames()), (4, 7));
        assert!(spec.data().iter().all(|&v| v == -80.0));
    }

    #[test]
    fn tone_energy_lands_in_its_band() {
        let cfg = SpectrogramConfig::for_sample_rate(22_050);
        let samples = (0..22_050)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 22_050.0).sin() as f32 * 0.5)
            .collect();
        let clip = AudioClip::new(samples, 22_050).unwrap();
        let spec = mel_spectrogram(&clip, &cfg).unwrap();
        let bank = mel_filterbank(&cfg, 22_050).unwrap();
        let edges = bank.edges_hz();
        let containing: Vec<usize> = (0..cfg.n_mels)
            .filter(|&i| edges[i] < 1000.0 && 1000.0 < edges[i + 2])
            .collect();
        for f in 0..spec.n_frames() {
            let argmax = (0..cfg.n_mels)
                .max_by(|&a, &b| spec.get(a, f).total_cmp(&spec.get(b, f)))
                .unwrap();
            assert!(containing.contains(&argmax), "frame {f}: band {argmax}");
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let cfg = small_config();
        let samples: Vec<f32> = (0..3000)
            .map(|i| ((i * 7919) % 101) as f32 / 101.0 - 0.5)
            .collect();
        let clip = AudioClip::new(samples, 22_050).unwrap();
        let a = mel_spectrogram(&clip, &cfg).unwrap();
        let b = mel_spectrogram(&clip, &cfg).unwrap();
        let bits = |s: &MelSpectrogram| s.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    proptest! {
        #[test]
        fn hz_to_mel_strictly_increasing(a in 0.0f64..20_000.0, d in 1e-3f64..1_000.0) {
            prop_assert!(hz_to_mel(a + d).unwrap() > hz_to_mel(a).unwrap());
        }

        #[test]
        fn frame_count_formula(len in 512usize..5_000, log_n in 4u32..10, hop_frac in 1usize..=8) {
            let n_fft = 1usize << log_n;
            let hop = (n_fft * hop_frac / 8).max(1);
            prop_assume!(len >= n_fft);
            let cfg = SpectrogramConfig { n_fft, hop, n_mels: 4, fmin: 0.0, fmax: 4_000.0, floor_db: -80.0 };
            let clip = AudioClip::new(vec![0.0; len], 8_000).unwrap();
            let spec = mel_spectrogram(&clip, &cfg).unwrap();
            prop_assert_eq!(spec.n_frames(), 1 + (len - n_fft) / hop);
            prop_assert!(spec.data().iter().all(|&v| v >= -80.0));
        }
    }
}
