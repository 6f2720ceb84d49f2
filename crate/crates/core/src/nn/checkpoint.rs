//! In-memory checkpoint: named tensors, architecture and run metadata.
//!
//! Metadata travels as ordinary `f32` tensors under the reserved `meta.`
//! prefix so that a checkpoint is just a flat list of named tensors on disk.
//! Every value stored there is an integer below 2^16 or a feature setting
//! that is exactly representable in `f32`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};

use super::{InputAdapter, LoadMode, NnError, ResNet, ResNetConfig, Tensor};
use crate::dsp::SpectrogramConfig;
use crate::features::FeatureSettings;

const META_PREFIX: &str = "meta.";
const META_ARCH: &str = "meta.arch";
const META_RUN: &str = "meta.run";
const META_FEATURES: &str = "meta.features";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckpointMeta {
    pub epoch: u32,
    pub seed: u64,
    pub features: Option<FeatureSettings>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ResNetConfig,
    pub tensors: BTreeMap<String, Tensor<f32>>,
    pub meta: CheckpointMeta,
}

fn u16_limbs(v: u64) -> [f32; 4] {
    [
        (v >> 48) as u16,
        (v >> 32) as u16,
        (v >> 16) as u16,
        v as u16,
    ]
    .map(f32::from)
}

fn from_limbs(l: &[f32]) -> u64 {
    l.iter()
        .fold(0u64, |acc, &x| (acc << 16) | u64::from(x as u16))
}

fn as_u32s(t: &Tensor<f32>) -> Option<Vec<u32>> {
    t.data()
        .iter()
        .map(|&v| (v >= 0.0 && libm::truncf(v) == v && v < 16_777_216.0).then_some(v as u32))
        .collect()
}

impl Checkpoint {
    pub fn from_model(model: &ResNet<f32>, meta: CheckpointMeta) -> Self {
        Self {
            config: model.config().clone(),
            tensors: model.state_dict(),
            meta,
        }
    }

    /// Rebuilds the graph and loads every tensor strictly.
    pub fn to_model(&self) -> Result<ResNet<f32>, NnError> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = ResNet::new(self.config.clone(), &mut rng)?;
        model.load_state(&self.tensors, LoadMode::Strict)?;
        Ok(model)
    }

    /// Loads this checkpoint's backbone into a graph built from `target`
    /// (whose head may differ) and returns it.
    pub fn backbone_into<R: Rng>(
        &self,
        target: ResNetConfig,
        rng: &mut R,
    ) -> Result<ResNet<f32>, NnError> {
        let mut model = ResNet::new(target, rng)?;
        model.load_state(&self.tensors, LoadMode::BackboneOnly)?;
        Ok(model)
    }

    /// Replaces the classifier with a freshly initialized `width -> n` layer.
    pub fn replace_final_layer<R: Rng>(&mut self, n: usize, rng: &mut R) -> Result<(), NnError> {
        if !self.tensors.contains_key("fc.weight") || !self.tensors.contains_key("fc.bias") {
            return Err(NnError::NoFinalLinear);
        }
        let mut model = self.backbone_into(self.config.clone(), rng)?;
        model.replace_final_layer(n, rng)?;
        self.config = model.config().clone();
        let head = model.state_dict();
        for key in ["fc.weight", "fc.bias"] {
            self.tensors.insert(key.into(), head[key].clone());
        }
        Ok(())
    }

    /// Flat list including the `meta.*` tensors, ready for serialization.
    pub fn to_named_tensors(&self) -> Vec<(String, Tensor<f32>)> {
        let descriptor: Vec<f32> = self
            .config
            .to_descriptor()
            .into_iter()
            .map(|v| v as f32)
            .collect();
        let mut run = vec![
            f32::from((self.meta.epoch >> 16) as u16),
            f32::from(self.meta.epoch as u16),
        ];
        run.extend(u16_limbs(self.meta.seed));
        let mut out = vec![
            (
                META_ARCH.into(),
                Tensor::new(&[descriptor.len()], descriptor).expect("non-empty"),
            ),
            (META_RUN.into(), Tensor::new(&[6], run).expect("six values")),
        ];
        if let Some(f) = &self.meta.features {
            let s = &f.spectrogram;
            let values = vec![
                f.sample_rate as f32,
                s.n_fft as f32,
                s.hop as f32,
                s.n_mels as f32,
                s.fmin as f32,
                s.fmax as f32,
                s.floor_db as f32,
                f.adapter.channels as f32,
                f.adapter.size as f32,
                if f.adapter.imagenet_norm { 1.0 } else { 0.0 },
            ];
            out.push((
                META_FEATURES.into(),
                Tensor::new(&[10], values).expect("ten values"),
            ));
        }
        out.extend(self.tensors.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    pub fn from_named_tensors(list: Vec<(String, Tensor<f32>)>) -> Result<Self, NnError> {
        let mut tensors = BTreeMap::new();
        let mut meta_map = BTreeMap::new();
        for (name, t) in list {
            let target = if name.starts_with(META_PREFIX) {
                &mut meta_map
            } else {
                &mut tensors
            };
            if target.insert(name.clone(), t).is_some() {
                return Err(NnError::InvalidConfig(alloc::format!(
                    "duplicate tensor {name:?}"
                )));
            }
        }
        let arch = meta_map
            .get(META_ARCH)
            .ok_or_else(|| NnError::MissingParameter(META_ARCH.into()))?;
        let descriptor = as_u32s(arch)
            .ok_or_else(|| NnError::InvalidConfig("non-integer architecture descriptor".into()))?;
        let config = ResNetConfig::from_descriptor(&descriptor)?;

        let run = meta_map
            .get(META_RUN)
            .ok_or_else(|| NnError::MissingParameter(META_RUN.into()))?;
        if run.len() != 6 {
            return Err(NnError::InvalidConfig(
                "run metadata must hold six values".into(),
            ));
        }
        let r = run.data();
        let epoch = (from_limbs(&r[..2])) as u32;
        let seed = from_limbs(&r[2..]);

        let features = match meta_map.get(META_FEATURES) {
            None => None,
            Some(t) if t.len() == 10 => {
                let v = t.data();
                Some(FeatureSettings {
                    sample_rate: v[0] as u32,
                    spectrogram: SpectrogramConfig {
                        n_fft: v[1] as usize,
                        hop: v[2] as usize,
                        n_mels: v[3] as usize,
                        fmin: f64::from(v[4]),
                        fmax: f64::from(v[5]),
                        floor_db: f64::from(v[6]),
                    },
                    adapter: InputAdapter {
                        channels: v[7] as usize,
                        size: v[8] as usize,
                        imagenet_norm: v[9] != 0.0,
                    },
                })
            }
            Some(_) => {
                return Err(NnError::InvalidConfig(
                    "feature metadata must hold ten values".into(),
                ))
            }
        };
        Ok(Self {
            config,
            tensors,
            meta: CheckpointMeta {
                epoch,
                seed,
                features,
            },
        })
    }
}
