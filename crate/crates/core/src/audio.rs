//! Canonical mono clips: WAV decoding, downmixing, resampling and peak normalization.

use alloc::vec::Vec;
use thiserror::Error;

/// Sample rate every clip is brought to before feature extraction.
pub const CANONICAL_SAMPLE_RATE: u32 = 22_050;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xfffe;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AudioError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(&'static str),
    #[error("truncated file: data chunk declares {declared} bytes but only {available} remain")]
    TruncatedFile { declared: usize, available: usize },
    #[error("malformed WAV header: {0}")]
    MalformedHeader(&'static str),
    #[error("clip has no samples")]
    EmptyClip,
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite sample at frame {0}")]
    NonFiniteSample(usize),
}

/// Mono floating-point signal with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if samples.is_empty() {
            return Err(AudioError::EmptyClip);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

#[derive(Debug, Clone, Copy)]
struct FmtChunk {
    float: bool,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk, AudioError> {
    let mut r = Reader {
        bytes: body,
        pos: 0,
    };
    let short = AudioError::MalformedHeader("fmt chunk too short");
    let mut tag = r.u16().ok_or(short.clone())?;
    let channels = r.u16().ok_or(short.clone())?;
    let sample_rate = r.u32().ok_or(short.clone())?;
    let _byte_rate = r.u32().ok_or(short.clone())?;
    let _block_align = r.u16().ok_or(short.clone())?;
    let bits = r.u16().ok_or(short.clone())?;
    if tag == FORMAT_EXTENSIBLE {
        // cbSize, valid bits, channel mask, then the sub-format GUID whose
        // first two bytes carry the actual format tag.
        r.take(8).ok_or(short.clone())?;
        tag = r.u16().ok_or(short)?;
    }
    let float = match tag {
        FORMAT_PCM => false,
        FORMAT_IEEE_FLOAT => true,
        _ => return Err(AudioError::UnsupportedFormat("compressed or non-PCM codec")),
    };
    if channels == 0 || channels > 2 {
        return Err(AudioError::UnsupportedFormat(
            "only mono and stereo are supported",
        ));
    }
    if sample_rate == 0 {
        return Err(AudioError::MalformedHeader("zero sample rate"));
    }
    match (float, bits) {
        (false, 8 | 16 | 24 | 32) | (true, 32) => {}
        _ => return Err(AudioError::UnsupportedFormat("unsupported bit depth")),
    }
    Ok(FmtChunk {
        float,
        channels,
        sample_rate,
        bits,
    })
}

fn decode_sample(fmt: &FmtChunk, b: &[u8]) -> f32 {
    match (fmt.float, fmt.bits) {
        (true, _) => f32::from_le_bytes([b[0], b[1], b[2], b[3]]),
        (false, 8) => (f32::from(b[0]) - 128.0) / 128.0,
        (false, 16) => f32::from(i16::from_le_bytes([b[0], b[1]])) / 32_768.0,
        (false, 24) => {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            v as f32 / 8_388_608.0
        }
        _ => (f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])) / 2_147_483_648.0) as f32,
    }
}

/// Decodes a RIFF/WAVE byte stream into a mono clip.
///
/// Integer PCM is scaled by `2^(bits-1)`; stereo frames are averaged.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4) != Some(b"RIFF") {
        return Err(AudioError::MalformedHeader("missing RIFF tag"));
    }
    r.u32()
        .ok_or(AudioError::MalformedHeader("missing RIFF size"))?;
    if r.take(4) != Some(b"WAVE") {
        return Err(AudioError::MalformedHeader("missing WAVE tag"));
    }

    let mut fmt = None;
    let mut data = None;
    while r.remaining() >= 8 {
        let id = r.take(4).unwrap_or_default();
        let size = r.u32().unwrap_or_default() as usize;
        match id {
            b"fmt " => {
                let body = r
                    .take(size)
                    .ok_or(AudioError::MalformedHeader("fmt chunk exceeds file"))?;
                fmt = Some(parse_fmt(body)?);
            }
            b"data" => {
                let available = r.remaining();
                if size > available {
                    return Err(AudioError::TruncatedFile {
                        declared: size,
                        available,
                    });
                }
                data = r.take(size);
                if fmt.is_some() {
                    break;
                }
            }
            _ => {
                if r.take(size).is_none() {
                    break;
                }
            }
        }
        if size % 2 == 1 {
            r.take(1);
        }
    }

    let fmt = fmt.ok_or(AudioError::MalformedHeader("missing fmt chunk"))?;
    let data = data.ok_or(AudioError::MalformedHeader("missing data chunk"))?;
    let width = usize::from(fmt.bits / 8);
    let frame = width * usize::from(fmt.channels);
    let frames = data.len() / frame;
    if frames == 0 {
        return Err(AudioError::EmptyClip);
    }

    let mut samples = Vec::with_capacity(frames);
    for (i, chunk) in data.chunks_exact(frame).enumerate() {
        let mut acc = 0.0f64;
        for ch in chunk.chunks_exact(width) {
            let s = decode_sample(&fmt, ch);
            if !s.is_finite() {
                return Err(AudioError::NonFiniteSample(i));
            }
            acc += f64::from(s.clamp(-1.0, 1.0));
        }
        samples.push((acc / f64::from(fmt.channels)) as f32);
    }
    AudioClip::new(samples, fmt.sample_rate)
}

fn wav_header(out: &mut Vec<u8>, tag: u16, channels: u16, rate: u32, bits: u16, data_len: usize) {
    let block_align = channels * (bits / 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * u32::from(block_align)).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
}

/// Encodes interleaved 16-bit PCM frames as a canonical 44-byte-header WAV.
pub fn encode_wav_pcm16(interleaved: &[i16], channels: u16, sample_rate: u32) -> Vec<u8> {
    let data_len = interleaved.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    wav_header(&mut out, FORMAT_PCM, channels, sample_rate, 16, data_len);
    for s in interleaved {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Encodes interleaved 32-bit float frames.
pub fn encode_wav_f32(interleaved: &[f32], channels: u16, sample_rate: u32) -> Vec<u8> {
    let data_len = interleaved.len() * 4;
    let mut out = Vec::with_capacity(44 + data_len);
    wav_header(
        &mut out,
        FORMAT_IEEE_FLOAT,
        channels,
        sample_rate,
        32,
        data_len,
    );
    for s in interleaved {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Quantizes `[-1, 1]` samples to 16-bit integers (inverse of the decoder scaling).
pub fn quantize_pcm16(samples: &[f32]) -> Vec<i16> {
    samples
        .iter()
        .map(|&s| libm::round(f64::from(s) * 32_768.0).clamp(-32_768.0, 32_767.0) as i16)
        .collect()
}

/// Linear-interpolation resampler with no anti-alias filter.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::ZeroSampleRate);
    }
    if clip.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    let src_rate = clip.sample_rate();
    if src_rate == target_rate {
        return Ok(clip.clone());
    }
    let n_in = clip.len() as u64;
    let (src, dst) = (u64::from(src_rate), u64::from(target_rate));
    let n_out = ((n_in * dst + src / 2) / src).max(1) as usize;
    let input = clip.samples();
    let last = input.len() - 1;
    let step = src as f64 / dst as f64;
    let out = (0..n_out)
        .map(|i| {
            let pos = i as f64 * step;
            let i0 = (libm::floor(pos) as usize).min(last);
            let i1 = (i0 + 1).min(last);
            let frac = (pos - i0 as f64) as f32;
            let (a, b) = (input[i0], input[i1]);
            a + (b - a) * frac
        })
        .collect();
    AudioClip::new(out, target_rate)
}

/// Scales a clip so its largest magnitude is exactly 1; silent clips pass through.
pub fn normalize_peak(clip: &AudioClip) -> AudioClip {
    let peak = clip.peak();
    if peak == 0.0 {
        return clip.clone();
    }
    let samples = clip
        .samples()
        .iter()
        .map(|&s| (s / peak).clamp(-1.0, 1.0))
        .collect();
    AudioClip {
        samples,
        sample_rate: clip.sample_rate(),
    }
}

/// Resample to the canonical rate, then peak-normalize.
pub fn canonicalize(clip: &AudioClip, sample_rate: u32) -> Result<AudioClip, AudioError> {
    Ok(normalize_peak(&resample(clip, sample_rate)?))
}
