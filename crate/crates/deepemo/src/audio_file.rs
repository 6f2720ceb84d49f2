use std::fs;
use std::path::Path;

use deepemo_core::audio::{decode_wav, encode_wav_pcm16, quantize_pcm16, AudioClip, AudioError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Decode { path: String, source: AudioError },
}

pub fn read_wav(path: &Path) -> Result<AudioClip, AudioFileError> {
    let bytes = fs::read(path).map_err(|source| AudioFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_wav(&bytes).map_err(|source| AudioFileError::Decode {
        path: path.display().to_string(),
        source,
    })
}

/// Mono 16-bit PCM.
pub fn write_wav_pcm16(path: &Path, clip: &AudioClip) -> std::io::Result<()> {
    fs::write(
        path,
        encode_wav_pcm16(&quantize_pcm16(clip.samples()), 1, clip.sample_rate()),
    )
}
