//! DEMO checkpoint files.
//!
//! Little-endian: magic `DEMO`, u32 version, u32 tensor count, then per
//! tensor a u32-prefixed UTF-8 name, u32 rank, the dims as u32 and the f32
//! data. A u64 FNV-1a checksum of every preceding byte closes the file.

use std::fs;
use std::path::Path;

use deepemo_core::hash::fnv1a64;
use deepemo_core::nn::{Checkpoint, NnError, Tensor};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"DEMO";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointFileError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}, expected {VERSION}")]
    VersionMismatch(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("tensor {0:?} has an invalid shape")]
    BadShape(String),
    #[error("{} trailing bytes after the checksum", .0)]
    TrailingBytes(usize),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub fn encode(checkpoint: &Checkpoint) -> Vec<u8> {
    let tensors = checkpoint.to_named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let checksum = fnv1a64(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointFileError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointFileError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointFileError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointFileError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointFileError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointFileError::VersionMismatch(version));
    }
    if bytes.len() < 20 {
        return Err(CheckpointFileError::Truncated(bytes.len()));
    }
    let body_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
    // Parse against the body only so a short file reports truncation
    // rather than reading its checksum as data.
    r.bytes = &bytes[..body_end];
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CheckpointFileError::BadName)?
            .to_owned();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n
            .filter(|&n| n > 0 && ndim > 0)
            .ok_or_else(|| CheckpointFileError::BadShape(name.clone()))?;
        let raw = r.take(
            n.checked_mul(4)
                .ok_or_else(|| CheckpointFileError::BadShape(name.clone()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let tensor =
            Tensor::new(&shape, data).map_err(|_| CheckpointFileError::BadShape(name.clone()))?;
        tensors.push((name, tensor));
    }
    if r.pos != body_end {
        return Err(CheckpointFileError::TrailingBytes(body_end - r.pos));
    }
    if fnv1a64(&bytes[..body_end]) != stored {
        return Err(CheckpointFileError::ChecksumMismatch);
    }
    Ok(Checkpoint::from_named_tensors(tensors)?)
}

pub fn save(checkpoint: &Checkpoint, path: &Path) -> Result<(), CheckpointFileError> {
    fs::write(path, encode(checkpoint)).map_err(|source| CheckpointFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointFileError> {
    let bytes = fs::read(path).map_err(|source| CheckpointFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use deepemo_core::nn::{Arch, CheckpointMeta, ResNet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let model = ResNet::new(
            Arch::ResNetTiny.config(8),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        Checkpoint::from_model(
            &model,
            CheckpointMeta {
                epoch: 3,
                seed: 42,
                features: None,
            },
        )
    }

    #[test]
    fn round_trip_is_bitwise() {
        let cp = sample();
        let bytes = encode(&cp);
        assert_eq!(&bytes[..4], b"DEMO");
        assert_eq!(decode(&bytes).unwrap(), cp);
        assert_eq!(encode(&decode(&bytes).unwrap()), bytes);
    }

    #[test]
    fn header_errors() {
        let mut bytes = encode(&sample());
        assert!(matches!(
            decode(b"NOPE0000"),
            Err(CheckpointFileError::BadMagic)
        ));
        assert!(matches!(decode(b""), Err(CheckpointFileError::BadMagic)));
        bytes[4] = 2;
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointFileError::VersionMismatch(2))
        ));
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode(&sample());
        let mut flipped = bytes.clone();
        let mid = bytes.len() / 2;
        flipped[mid] ^= 0x40;
        assert!(decode(&flipped).is_err());
        assert!(decode(&bytes[..bytes.len() - 100]).is_err());
        let mut data_flip = bytes.clone();
        let last_data = bytes.len() - 9;
        data_flip[last_data] ^= 1;
        assert!(matches!(
            decode(&data_flip),
            Err(CheckpointFileError::ChecksumMismatch)
        ));
    }

    #[test]
    fn renamed_tensor_is_reported_on_load() {
        let cp = sample();
        let mut list = cp.to_named_tensors();
        let idx = list
            .iter()
            .position(|(n, _)| n == "layer1.0.conv1.weight")
            .unwrap();
        list[idx].0 = "layer1.0.conv9.weight".into();
        let renamed = Checkpoint::from_named_tensors(list).unwrap();
        let err = renamed.to_model().unwrap_err();
        assert!(
            matches!(err, NnError::MissingParameter(ref n) if n == "layer1.0.conv1.weight"),
            "{err:?}"
        );
    }
}
