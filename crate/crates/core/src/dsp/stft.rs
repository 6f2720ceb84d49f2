use alloc::vec::Vec;
use num_complex::Complex64;

use super::{hann_window, DspError, FftPlan, SpectrogramConfig};
use crate::audio::AudioClip;

/// `1 + floor((len - n_fft) / hop)`, or zero when the signal is shorter than a frame.
pub fn frame_count(len: usize, n_fft: usize, hop: usize) -> usize {
    if len < n_fft || hop == 0 {
        0
    } else {
        1 + (len - n_fft) / hop
    }
}

/// Hann-windowed STFT without centering or padding. Frame `f` covers
/// samples `[f*hop, f*hop + n_fft)`.
pub fn stft(clip: &AudioClip, config: &SpectrogramConfig) -> Result<Vec<Vec<Complex64>>, DspError> {
    let plan = FftPlan::new(config.n_fft)?;
    if config.hop == 0 || config.hop > config.n_fft {
        return Err(DspError::InvalidConfig("hop must satisfy 0 < hop <= n_fft"));
    }
    stft_with(
        clip.samples(),
        config.hop,
        &plan,
        &hann_window(config.n_fft),
    )
}

pub(crate) fn stft_with(
    samples: &[f32],
    hop: usize,
    plan: &FftPlan,
    window: &[f64],
) -> Result<Vec<Vec<Complex64>>, DspError> {
    let n_fft = plan.len();
    if samples.len() < n_fft {
        return Err(DspError::SignalShorterThanFrame {
            len: samples.len(),
            n_fft,
        });
    }
    let frames = frame_count(samples.len(), n_fft, hop);
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = f * hop;
        let mut buf: Vec<Complex64> = samples[start..start + n_fft]
            .iter()
            .zip(window)
            .map(|(&s, &w)| Complex64::new(f64::from(s) * w, 0.0))
            .collect();
        plan.process(&mut buf)?;
        out.push(buf);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn config(n_fft: usize, hop: usize) -> SpectrogramConfig {
        SpectrogramConfig {
            n_fft,
            hop,
            ..SpectrogramConfig::for_sample_rate(22_050)
        }
    }

    #[test]
    fn frame_count_example() {
        let clip = AudioClip::new(vec![0.0; 1024], 22_050).unwrap();
        let frames = stft(&clip, &config(512, 256)).unwrap();
        assert_eq!(frames.len(), 3);
        assert!(frames.iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn short_signal_is_rejected() {
        let clip = AudioClip::new(vec![0.0; 100], 22_050).unwrap();
        assert_eq!(
            stft(&clip, &config(512, 256)),
            Err(DspError::SignalShorterThanFrame {
                len: 100,
                n_fft: 512
            })
        );
    }

    #[test]
    fn bin_centred_sine_peaks_at_its_bin() {
        let (rate, n_fft, k) = (22_050u32, 512usize, 37usize);
        let freq = k as f64 * f64::from(rate) / n_fft as f64;
        let samples = (0..4096)
            .map(|i| (2.0 * PI * freq * i as f64 / f64::from(rate)).sin() as f32 * 0.8)
            .collect();
        let clip = AudioClip::new(samples, rate).unwrap();
        for frame in stft(&clip, &config(n_fft, 128)).unwrap() {
            let argmax = (0..=n_fft / 2)
                .max_by(|&a, &b| frame[a].norm().total_cmp(&frame[b].norm()))
                .unwrap();
            assert_eq!(argmax, k);
        }
    }
}
