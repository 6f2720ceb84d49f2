//! ResNet graphs: the canonical 18-layer network and a reduced variant for
//! desk-scale experiments, sharing one implementation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};

use super::layers::{BasicBlock, BatchNorm2d, Conv2d, Linear, Mode, SlotKind, Visitor, VisitorMut};
use super::ops::{
    global_avg_pool, global_avg_pool_backward, maxpool2d_backward, maxpool2d_forward, relu,
    relu_backward, MaxPoolIndices,
};
use super::{shape_err, NnError, Scalar, Tensor};

const HEAD_PREFIX: &str = "fc.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// 7x7/2 stem, max pool, four stages of two blocks, 64..512 channels, 224x224 input.
    ResNet18,
    /// 3x3/1 stem, max pool, four stages of one block, 8..64 channels, 64x64 input.
    ResNetTiny,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::ResNet18 => "resnet18",
            Arch::ResNetTiny => "resnet_tiny",
        }
    }

    pub fn config(self, num_classes: usize) -> ResNetConfig {
        match self {
            Arch::ResNet18 => ResNetConfig {
                arch: self,
                in_channels: 3,
                input_size: 224,
                stem_channels: 64,
                stem_kernel: 7,
                stem_stride: 2,
                stem_pad: 3,
                stem_maxpool: true,
                stage_channels: vec![64, 128, 256, 512],
                blocks_per_stage: vec![2, 2, 2, 2],
                num_classes,
            },
            Arch::ResNetTiny => ResNetConfig {
                arch: self,
                in_channels: 3,
                input_size: 64,
                stem_channels: 8,
                stem_kernel: 3,
                stem_stride: 1,
                stem_pad: 1,
                stem_maxpool: true,
                stage_channels: vec![8, 16, 32, 64],
                blocks_per_stage: vec![1, 1, 1, 1],
                num_classes,
            },
        }
    }

    fn id(self) -> u32 {
        match self {
            Arch::ResNet18 => 18,
            Arch::ResNetTiny => 1,
        }
    }

    fn from_id(id: u32) -> Option<Self> {
        match id {
            18 => Some(Arch::ResNet18),
            1 => Some(Arch::ResNetTiny),
            _ => None,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "resnet18" => Ok(Arch::ResNet18),
            "resnet_tiny" | "resnet-tiny" => Ok(Arch::ResNetTiny),
            other => Err(NnError::InvalidConfig(format!(
                "unknown architecture {other:?}"
            ))),
        }
    }
}

/// One entry of the ordered layer table describing a graph.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        name: String,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    BatchNorm2d {
        name: String,
        channels: usize,
        eps: f64,
        momentum: f64,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    ResidualBlock {
        name: String,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        downsample: bool,
    },
    GlobalAvgPool,
    Linear {
        name: String,
        in_features: usize,
        out_features: usize,
    },
}

impl LayerSpec {
    /// Trainable parameter count (running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                bias,
                ..
            } => out_ch * in_ch * kernel * kernel + if bias { out_ch } else { 0 },
            LayerSpec::BatchNorm2d { channels, .. } => 2 * channels,
            LayerSpec::ResidualBlock {
                in_ch,
                out_ch,
                downsample,
                ..
            } => {
                let convs = 9 * in_ch * out_ch + 9 * out_ch * out_ch + 4 * out_ch;
                convs
                    + if downsample {
                        in_ch * out_ch + 2 * out_ch
                    } else {
                        0
                    }
            }
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => in_features * out_features + out_features,
            LayerSpec::Relu | LayerSpec::MaxPool2d { .. } | LayerSpec::GlobalAvgPool => 0,
        }
    }
}

/// Architecture descriptor: everything needed to rebuild a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResNetConfig {
    pub arch: Arch,
    pub in_channels: usize,
    pub input_size: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stem_pad: usize,
    pub stem_maxpool: bool,
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: Vec<usize>,
    pub num_classes: usize,
}

impl ResNetConfig {
    pub fn feature_width(&self) -> usize {
        self.stage_channels
            .last()
            .copied()
            .unwrap_or(self.stem_channels)
    }

    /// Ordered layer table, stem to classifier.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = vec![
            LayerSpec::Conv2d {
                name: "conv1".into(),
                in_ch: self.in_channels,
                out_ch: self.stem_channels,
                kernel: self.stem_kernel,
                stride: self.stem_stride,
                pad: self.stem_pad,
                bias: false,
            },
            LayerSpec::BatchNorm2d {
                name: "bn1".into(),
                channels: self.stem_channels,
                eps: BatchNorm2d::<f32>::DEFAULT_EPS,
                momentum: BatchNorm2d::<f32>::DEFAULT_MOMENTUM,
            },
            LayerSpec::Relu,
        ];
        if self.stem_maxpool {
            out.push(LayerSpec::MaxPool2d {
                kernel: 3,
                stride: 2,
                pad: 1,
            });
        }
        let mut in_ch = self.stem_channels;
        for (s, (&ch, &blocks)) in self
            .stage_channels
            .iter()
            .zip(&self.blocks_per_stage)
            .enumerate()
        {
            for b in 0..blocks {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                out.push(LayerSpec::ResidualBlock {
                    name: format!("layer{}.{}", s + 1, b),
                    in_ch,
                    out_ch: ch,
                    stride,
                    downsample: stride != 1 || in_ch != ch,
                });
                in_ch = ch;
            }
        }
        out.push(LayerSpec::GlobalAvgPool);
        out.push(LayerSpec::Linear {
            name: "fc".into(),
            in_features: in_ch,
            out_features: self.num_classes,
        });
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(LayerSpec::parameter_count).sum()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.into()));
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2");
        }
        if self.stage_channels.is_empty()
            || self.stage_channels.len() != self.blocks_per_stage.len()
        {
            return bad("stage channel and block lists must be non-empty and equally long");
        }
        if self.blocks_per_stage.contains(&0) || self.stage_channels.contains(&0) {
            return bad("stages need at least one block and one channel");
        }
        if self.in_channels == 0
            || self.input_size == 0
            || self.stem_channels == 0
            || self.stem_kernel == 0
            || self.stem_stride == 0
        {
            return bad("stem dimensions must be positive");
        }
        let layers = self.layers();
        let linears = layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Linear { .. }))
            .count();
        if linears != 1 || !matches!(layers.last(), Some(LayerSpec::Linear { .. })) {
            return bad("graph must end in exactly one linear layer");
        }
        let mut size = self.input_size;
        let mut ch = self.in_channels;
        for layer in &layers {
            match *layer {
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    pad,
                    ..
                } => {
                    if in_ch != ch {
                        return bad("conv input channels do not chain");
                    }
                    size = super::ops::conv_output_size(size, kernel, stride, pad)
                        .ok_or_else(|| NnError::InvalidConfig("input too small for stem".into()))?;
                    ch = out_ch;
                }
                LayerSpec::MaxPool2d {
                    kernel,
                    stride,
                    pad,
                } => {
                    size = super::ops::conv_output_size(size, kernel, stride, pad).ok_or_else(
                        || NnError::InvalidConfig("input too small for pooling".into()),
                    )?;
                }
                LayerSpec::ResidualBlock {
                    in_ch,
                    out_ch,
                    stride,
                    ..
                } => {
                    if in_ch != ch {
                        return bad("residual block channels do not chain");
                    }
                    size = super::ops::conv_output_size(size, 3, stride, 1).ok_or_else(|| {
                        NnError::InvalidConfig("input too small for stages".into())
                    })?;
                    ch = out_ch;
                }
                LayerSpec::Linear { in_features, .. } if in_features != ch => {
                    return bad("linear input width does not match pooled features");
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Flat integer encoding stored alongside checkpoints.
    pub fn to_descriptor(&self) -> Vec<u32> {
        let mut d = vec![
            self.arch.id(),
            self.in_channels as u32,
            self.input_size as u32,
            self.stem_channels as u32,
            self.stem_kernel as u32,
            self.stem_stride as u32,
            self.stem_pad as u32,
            u32::from(self.stem_maxpool),
            self.num_classes as u32,
            self.stage_channels.len() as u32,
        ];
        d.extend(self.stage_channels.iter().map(|&c| c as u32));
        d.extend(self.blocks_per_stage.iter().map(|&b| b as u32));
        d
    }

    pub fn from_descriptor(d: &[u32]) -> Result<Self, NnError> {
        let err = || NnError::InvalidConfig("malformed architecture descriptor".into());
        if d.len() < 10 {
            return Err(err());
        }
        let stages = d[9] as usize;
        if d.len() != 10 + 2 * stages {
            return Err(err());
        }
        let config = Self {
            arch: Arch::from_id(d[0]).ok_or_else(err)?,
            in_channels: d[1] as usize,
            input_size: d[2] as usize,
            stem_channels: d[3] as usize,
            stem_kernel: d[4] as usize,
            stem_stride: d[5] as usize,
            stem_pad: d[6] as usize,
            stem_maxpool: d[7] != 0,
            num_classes: d[8] as usize,
            stage_channels: d[10..10 + stages].iter().map(|&c| c as usize).collect(),
            blocks_per_stage: d[10 + stages..].iter().map(|&b| b as usize).collect(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// How strictly [`ResNet::load_state`] matches a tensor map against the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Every tensor must be present with the graph's shape.
    Strict,
    /// Classifier tensors in the source are ignored and the current head is
    /// kept; used before replacing the head for a new task.
    BackboneOnly,
}

#[derive(Debug, Clone)]
pub struct ResNet<T: Scalar> {
    config: ResNetConfig,
    stem_conv: Conv2d<T>,
    stem_bn: BatchNorm2d<T>,
    stages: Vec<Vec<BasicBlock<T>>>,
    fc: Linear<T>,
    stem_pre: Option<Tensor<T>>,
    pool: Option<MaxPoolIndices>,
    pooled_shape: Option<Vec<usize>>,
}

impl<T: Scalar> ResNet<T> {
    pub fn new<R: Rng>(config: ResNetConfig, rng: &mut R) -> Result<Self, NnError> {
        config.validate()?;
        let stem_conv = Conv2d::new(
            config.in_channels,
            config.stem_channels,
            config.stem_kernel,
            config.stem_stride,
            config.stem_pad,
            false,
            rng,
        );
        let stem_bn = BatchNorm2d::new(config.stem_channels);
        let mut stages = Vec::with_capacity(config.stage_channels.len());
        let mut in_ch = config.stem_channels;
        for (s, (&ch, &blocks)) in config
            .stage_channels
            .iter()
            .zip(&config.blocks_per_stage)
            .enumerate()
        {
            let stage = (0..blocks)
                .map(|b| {
                    let stride = if s > 0 && b == 0 { 2 } else { 1 };
                    BasicBlock::new(if b == 0 { in_ch } else { ch }, ch, stride, rng)
                })
                .collect();
            stages.push(stage);
            in_ch = ch;
        }
        let fc = Linear::new(in_ch, config.num_classes, rng);
        Ok(Self {
            config,
            stem_conv,
            stem_bn,
            stages,
            fc,
            stem_pre: None,
            pool: None,
            pooled_shape: None,
        })
    }

    pub fn config(&self) -> &ResNetConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn head(&self) -> &Linear<T> {
        &self.fc
    }

    pub fn head_mut(&mut self) -> &mut Linear<T> {
        &mut self.fc
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        let [_, c, h, w] = x.dims4("resnet")?;
        if c != self.config.in_channels
            || h < self.config.stem_kernel
            || w < self.config.stem_kernel
        {
            return Err(shape_err(
                "resnet",
                ["N", "in_channels", "H", "W"],
                x.shape(),
            ));
        }
        Ok(())
    }

    /// Eval-mode forward pass with no caching; logits `[N, num_classes]`.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let mut h = relu(&self.stem_bn.infer(&self.stem_conv.infer(x)?)?);
        if self.config.stem_maxpool {
            h = maxpool2d_forward(&h, 3, 2, 1)?.0;
        }
        for block in self.stages.iter().flatten() {
            h = block.infer(&h)?;
        }
        self.fc.infer(&global_avg_pool(&h)?)
    }

    /// Forward pass that records activations for [`ResNet::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let pre = self.stem_bn.forward(&self.stem_conv.forward(x)?, mode)?;
        let mut h = relu(&pre);
        self.stem_pre = Some(pre);
        if self.config.stem_maxpool {
            let (pooled, idx) = maxpool2d_forward(&h, 3, 2, 1)?;
            self.pool = Some(idx);
            h = pooled;
        }
        for block in self.stages.iter_mut().flatten() {
            h = block.forward(&h, mode)?;
        }
        self.pooled_shape = Some(h.shape().to_vec());
        self.fc.forward(&global_avg_pool(&h)?)
    }

    /// Accumulates parameter gradients from `d loss / d logits`; returns the input gradient.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let shape = self
            .pooled_shape
            .take()
            .ok_or(NnError::NoForwardCache("resnet"))?;
        let mut g = global_avg_pool_backward(&shape, &self.fc.backward(grad_logits)?)?;
        for block in self.stages.iter_mut().flatten().rev() {
            g = block.backward(&g)?;
        }
        if self.config.stem_maxpool {
            let idx = self.pool.take().ok_or(NnError::NoForwardCache("resnet"))?;
            g = maxpool2d_backward(&idx, &g)?;
        }
        let pre = self
            .stem_pre
            .take()
            .ok_or(NnError::NoForwardCache("resnet"))?;
        let g = relu_backward(&pre, &g)?;
        self.stem_conv.backward(&self.stem_bn.backward(&g)?)
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, _, grad| {
            if let Some(g) = grad {
                g.fill(T::zero());
            }
        });
    }

    pub(crate) fn visit(&self, f: &mut Visitor<'_, T>) {
        self.stem_conv.visit("conv1.", f);
        self.stem_bn.visit("bn1.", f);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.visit(&format!("layer{}.{}.", s + 1, b), f);
            }
        }
        self.fc.visit(HEAD_PREFIX, f);
    }

    pub(crate) fn visit_mut(&mut self, f: &mut VisitorMut<'_, T>) {
        self.stem_conv.visit_mut("conv1.", f);
        self.stem_bn.visit_mut("bn1.", f);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for (b, block) in stage.iter_mut().enumerate() {
                block.visit_mut(&format!("layer{}.{}.", s + 1, b), f);
            }
        }
        self.fc.visit_mut(HEAD_PREFIX, f);
    }

    /// `(name, shape, kind)` for every tensor, in graph order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>, SlotKind)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t, kind| out.push((name.to_string(), t.shape().to_vec(), kind)));
        out
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t, kind| {
            if kind == SlotKind::Parameter {
                n += t.len();
            }
        });
        n
    }

    pub fn state_dict(&self) -> BTreeMap<String, Tensor<T>> {
        let mut out = BTreeMap::new();
        self.visit(&mut |name, t, _| {
            out.insert(name.to_string(), t.clone());
        });
        out
    }

    /// Copies tensors by name after validating names and shapes against the graph.
    /// Nothing is modified when validation fails.
    pub fn load_state(
        &mut self,
        tensors: &BTreeMap<String, Tensor<T>>,
        mode: LoadMode,
    ) -> Result<(), NnError> {
        let is_head = |name: &str| name.starts_with(HEAD_PREFIX);
        let layout = self.tensor_layout();
        for (name, shape, _) in &layout {
            if mode == LoadMode::BackboneOnly && is_head(name) {
                continue;
            }
            let t = tensors
                .get(name)
                .ok_or_else(|| NnError::MissingParameter(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(NnError::ShapeMismatch {
                    op: "load_state",
                    expected: format!("{name} {shape:?}"),
                    got: format!("{:?}", t.shape()),
                });
            }
        }
        if let Some(extra) = tensors.keys().find(|k| {
            !(mode == LoadMode::BackboneOnly && is_head(k))
                && !layout.iter().any(|(n, _, _)| n == *k)
        }) {
            return Err(NnError::UnexpectedParameter(extra.clone()));
        }
        self.visit_mut(&mut |name, value, _| {
            if mode == LoadMode::BackboneOnly && is_head(name) {
                return;
            }
            if let Some(src) = tensors.get(name) {
                value.data_mut().copy_from_slice(src.data());
            }
        });
        Ok(())
    }

    /// Swaps the classifier for a freshly initialized `feature_width -> n` layer;
    /// every other tensor is left untouched.
    pub fn replace_final_layer<R: Rng>(&mut self, n: usize, rng: &mut R) -> Result<(), NnError> {
        if n < 2 {
            return Err(NnError::InvalidConfig(
                "num_classes must be at least 2".into(),
            ));
        }
        self.fc = Linear::new(self.fc.in_features(), n, rng);
        self.config.num_classes = n;
        Ok(())
    }

    /// Same graph and weights in another precision (f64 for gradient checks).
    pub fn cast<U: Scalar>(&self) -> ResNet<U> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut out =
            ResNet::<U>::new(self.config.clone(), &mut rng).expect("config already validated");
        let state = self
            .state_dict()
            .into_iter()
            .map(|(k, v)| (k, v.cast()))
            .collect();
        out.load_state(&state, LoadMode::Strict)
            .expect("identical layout");
        out
    }
}
