//! MSPC spectrogram files: magic `MSPC`, u32 n_mels, u32 n_frames,
//! u32 sample rate, then row-major little-endian f32 values.

use deepemo_core::dsp::{DspError, MelSpectrogram, SpectrogramConfig};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MSPC";
const HEADER: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum MspcError {
    #[error("not an MSPC file (bad magic)")]
    BadMagic,
    #[error("MSPC payload is {got} bytes, header implies {expected}")]
    Length { expected: usize, got: usize },
    #[error("stored spectrogram has {stored} mel bands, config asks for {expected}")]
    ConfigMismatch { stored: usize, expected: usize },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub fn encode(spec: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * spec.data().len());
    out.extend_from_slice(MAGIC);
    for v in [
        spec.n_mels() as u32,
        spec.n_frames() as u32,
        spec.sample_rate(),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in spec.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// The header does not carry the spectrogram settings, so the caller
/// supplies the config the file was computed with.
pub fn decode(bytes: &[u8], config: &SpectrogramConfig) -> Result<MelSpectrogram, MspcError> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(MspcError::BadMagic);
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let (n_mels, n_frames, sample_rate) = (word(1) as usize, word(2) as usize, word(3));
    if n_mels != config.n_mels {
        return Err(MspcError::ConfigMismatch {
            stored: n_mels,
            expected: config.n_mels,
        });
    }
    let expected = n_mels.saturating_mul(n_frames).saturating_mul(4);
    if bytes.len() - HEADER != expected {
        return Err(MspcError::Length {
            expected,
            got: bytes.len() - HEADER,
        });
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(MelSpectrogram::from_parts(
        data,
        n_mels,
        n_frames,
        *config,
        sample_rate,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(n_mels: usize) -> SpectrogramConfig {
        SpectrogramConfig {
            n_mels,
            ..SpectrogramConfig::for_sample_rate(22_050)
        }
    }

    #[test]
    fn header_layout() {
        let spec = MelSpectrogram::from_parts(vec![1.5, -2.0], 2, 1, config(2), 16_000).unwrap();
        let bytes = encode(&spec);
        assert_eq!(&bytes[..4], b"MSPC");
        assert_eq!(bytes[4..16], [2, 0, 0, 0, 1, 0, 0, 0, 0x80, 0x3e, 0, 0]);
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn rejects_bad_input() {
        let spec = MelSpectrogram::from_parts(vec![0.0; 6], 3, 2, config(3), 22_050).unwrap();
        let bytes = encode(&spec);
        assert_eq!(
            decode(&bytes[..20], &config(3)),
            Err(MspcError::Length {
                expected: 24,
                got: 4
            })
        );
        assert_eq!(decode(b"MSPX", &config(3)), Err(MspcError::BadMagic));
        assert_eq!(
            decode(&bytes, &config(4)),
            Err(MspcError::ConfigMismatch {
                stored: 3,
                expected: 4
            })
        );
    }

    proptest! {
        #[test]
        fn round_trip(values in proptest::collection::vec(-100.0f32..10.0, 1..64), n_mels in 1usize..4) {
            let n_frames = values.len() / n_mels;
            prop_assume!(n_frames > 0);
            let data = values[..n_mels * n_frames].to_vec();
            let spec = MelSpectrogram::from_parts(data, n_mels, n_frames, config(n_mels), 22_050).unwrap();
            prop_assert_eq!(decode(&encode(&spec), &config(n_mels)).unwrap(), spec);
        }
    }
}
