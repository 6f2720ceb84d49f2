use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::init::kaiming_uniform;
use super::ops::{
    batchnorm2d_backward, batchnorm2d_forward, conv2d_backward, conv2d_forward, linear_backward,
    linear_forward, relu, relu_backward, BatchNormCache,
};
use super::{NnError, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Whether a named tensor is optimized or only carried along (running statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Parameter,
    Buffer,
}

pub(crate) type Visitor<'f, T> = dyn FnMut(&str, &Tensor<T>, SlotKind) + 'f;
pub(crate) type VisitorMut<'f, T> = dyn FnMut(&str, &mut Tensor<T>, Option<&mut Tensor<T>>) + 'f;

#[derive(Debug, Clone)]
pub(crate) struct Param<T: Scalar> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    fn visit(&self, name: &str, f: &mut Visitor<'_, T>) {
        f(name, &self.value, SlotKind::Parameter);
    }

    fn visit_mut(&mut self, name: &str, f: &mut VisitorMut<'_, T>) {
        f(name, &mut self.value, Some(&mut self.grad));
    }

    fn accumulate(&mut self, g: &Tensor<T>) -> Result<(), NnError> {
        self.grad.add_assign(g)
    }
}

/// Bias-free or biased 2-D convolution with square kernels.
#[derive(Debug, Clone)]
pub struct Conv2d<T: Scalar> {
    pub(crate) weight: Param<T>,
    pub(crate) bias: Option<Param<T>>,
    pub stride: usize,
    pub pad: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        Self {
            weight: Param::new(kaiming_uniform(
                &[out_ch, in_ch, kernel, kernel],
                fan_in,
                rng,
            )),
            bias: bias.then(|| Param::new(Tensor::zeros(&[out_ch]))),
            stride,
            pad,
            input: None,
        }
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight.value
    }

    pub fn weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weight.value
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        conv2d_forward(
            x,
            &self.weight.value,
            self.bias.as_ref().map(|b| &b.value),
            self.stride,
            self.pad,
        )
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let input = self.input.take().ok_or(NnError::NoForwardCache("conv2d"))?;
        let g = conv2d_backward(
            &input,
            &self.weight.value,
            grad_out,
            self.stride,
            self.pad,
            self.bias.is_some(),
        )?;
        self.weight.accumulate(&g.weight)?;
        if let (Some(b), Some(gb)) = (self.bias.as_mut(), g.bias.as_ref()) {
            b.accumulate(gb)?;
        }
        Ok(g.input)
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visitor<'_, T>) {
        self.weight.visit(&format!("{prefix}weight"), f);
        if let Some(b) = &self.bias {
            b.visit(&format!("{prefix}bias"), f);
        }
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_, T>) {
        self.weight.visit_mut(&format!("{prefix}weight"), f);
        if let Some(b) = &mut self.bias {
            b.visit_mut(&format!("{prefix}bias"), f);
        }
    }
}

/// Batch normalization with learnable scale/shift and running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T: Scalar> {
    pub(crate) gamma: Param<T>,
    pub(crate) beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: Self::DEFAULT_EPS,
            momentum: Self::DEFAULT_MOMENTUM,
            cache: None,
        }
    }

    pub fn gamma_mut(&mut self) -> &mut Tensor<T> {
        &mut self.gamma.value
    }

    pub fn beta_mut(&mut self) -> &mut Tensor<T> {
        &mut self.beta.value
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (mut rm, mut rv) = (self.running_mean.clone(), self.running_var.clone());
        let (y, _) = batchnorm2d_forward(
            x,
            &self.gamma.value,
            &self.beta.value,
            &mut rm,
            &mut rv,
            Mode::Eval,
            self.eps,
            self.momentum,
        )?;
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let (y, cache) = batchnorm2d_forward(
            x,
            &self.gamma.value,
            &self.beta.value,
            &mut self.running_mean,
            &mut self.running_var,
            mode,
            self.eps,
            self.momentum,
        )?;
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or(NnError::NoForwardCache("batchnorm2d"))?;
        let g = batchnorm2d_backward(&cache, &self.gamma.value, grad_out)?;
        self.gamma.accumulate(&g.gamma)?;
        self.beta.accumulate(&g.beta)?;
        Ok(g.input)
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visitor<'_, T>) {
        self.gamma.visit(&format!("{prefix}weight"), f);
        self.beta.visit(&format!("{prefix}bias"), f);
        f(
            &format!("{prefix}running_mean"),
            &self.running_mean,
            SlotKind::Buffer,
        );
        f(
            &format!("{prefix}running_var"),
            &self.running_var,
            SlotKind::Buffer,
        );
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_, T>) {
        self.gamma.visit_mut(&format!("{prefix}weight"), f);
        self.beta.visit_mut(&format!("{prefix}bias"), f);
        f(
            &format!("{prefix}running_mean"),
            &mut self.running_mean,
            None,
        );
        f(&format!("{prefix}running_var"), &mut self.running_var, None);
    }
}

/// Fully connected layer, weight stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear<T: Scalar> {
    pub(crate) weight: Param<T>,
    pub(crate) bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(kaiming_uniform(
                &[out_features, in_features],
                in_features,
                rng,
            )),
            bias: Param::new(Tensor::zeros(&[out_features])),
            input: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight.value
    }

    pub fn weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weight.value
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.bias.value
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        linear_forward(x, &self.weight.value, &self.bias.value)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let input = self.input.take().ok_or(NnError::NoForwardCache("linear"))?;
        let g = linear_backward(&input, &self.weight.value, grad_out)?;
        self.weight.accumulate(&g.weight)?;
        self.bias.accumulate(&g.bias)?;
        Ok(g.input)
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visitor<'_, T>) {
        self.weight.visit(&format!("{prefix}weight"), f);
        self.bias.visit(&format!("{prefix}bias"), f);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_, T>) {
        self.weight.visit_mut(&format!("{prefix}weight"), f);
        self.bias.visit_mut(&format!("{prefix}bias"), f);
    }
}

/// Two 3x3 conv/BN pairs plus a shortcut, `relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x))`.
/// The shortcut is a strided 1x1 conv + BN when the shape changes, identity otherwise.
#[derive(Debug, Clone)]
pub struct BasicBlock<T: Scalar> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub downsample: Option<(Conv2d<T>, BatchNorm2d<T>)>,
    hidden_pre: Option<Tensor<T>>,
    sum_pre: Option<Tensor<T>>,
}

impl<T: Scalar> BasicBlock<T> {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, stride: usize, rng: &mut R) -> Self {
        let downsample = (stride != 1 || in_ch != out_ch).then(|| {
            (
                Conv2d::new(in_ch, out_ch, 1, stride, 0, false, rng),
                BatchNorm2d::new(out_ch),
            )
        });
        Self {
            conv1: Conv2d::new(in_ch, out_ch, 3, stride, 1, false, rng),
            bn1: BatchNorm2d::new(out_ch),
            conv2: Conv2d::new(out_ch, out_ch, 3, 1, 1, false, rng),
            bn2: BatchNorm2d::new(out_ch),
            downsample,
            hidden_pre: None,
            sum_pre: None,
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let h = relu(&self.bn1.infer(&self.conv1.infer(x)?)?);
        let mut out = self.bn2.infer(&self.conv2.infer(&h)?)?;
        match &self.downsample {
            Some((conv, bn)) => out.add_assign(&bn.infer(&conv.infer(x)?)?)?,
            None => out.add_assign(x)?,
        }
        Ok(relu(&out))
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let pre = self.bn1.forward(&self.conv1.forward(x)?, mode)?;
        let h = relu(&pre);
        self.hidden_pre = Some(pre);
        let mut out = self.bn2.forward(&self.conv2.forward(&h)?, mode)?;
        match &mut self.downsample {
            Some((conv, bn)) => out.add_assign(&bn.forward(&conv.forward(x)?, mode)?)?,
            None => out.add_assign(x)?,
        }
        let y = relu(&out);
        self.sum_pre = Some(out);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let sum_pre = self
            .sum_pre
            .take()
            .ok_or(NnError::NoForwardCache("basic block"))?;
        let hidden_pre = self
            .hidden_pre
            .take()
            .ok_or(NnError::NoForwardCache("basic block"))?;
        let g_sum = relu_backward(&sum_pre, grad_out)?;
        let g_h = self.conv2.backward(&self.bn2.backward(&g_sum)?)?;
        let g_pre = relu_backward(&hidden_pre, &g_h)?;
        let mut g_x = self.conv1.backward(&self.bn1.backward(&g_pre)?)?;
        match &mut self.downsample {
            Some((conv, bn)) => g_x.add_assign(&conv.backward(&bn.backward(&g_sum)?)?)?,
            None => g_x.add_assign(&g_sum)?,
        }
        Ok(g_x)
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visitor<'_, T>) {
        self.conv1.visit(&format!("{prefix}conv1."), f);
        self.bn1.visit(&format!("{prefix}bn1."), f);
        self.conv2.visit(&format!("{prefix}conv2."), f);
        self.bn2.visit(&format!("{prefix}bn2."), f);
        if let Some((conv, bn)) = &self.downsample {
            conv.visit(&format!("{prefix}downsample.0."), f);
            bn.visit(&format!("{prefix}downsample.1."), f);
        }
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitorMut<'_, T>) {
        self.conv1.visit_mut(&format!("{prefix}conv1."), f);
        self.bn1.visit_mut(&format!("{prefix}bn1."), f);
        self.conv2.visit_mut(&format!("{prefix}conv2."), f);
        self.bn2.visit_mut(&format!("{prefix}bn2."), f);
        if let Some((conv, bn)) = &mut self.downsample {
            conv.visit_mut(&format!("{prefix}downsample.0."), f);
            bn.visit_mut(&format!("{prefix}downsample.1."), f);
        }
    }

    /// Names and values of every tensor in the block.
    pub fn named_tensors(&self) -> Vec<(alloc::string::String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t, _| out.push((name.into(), t.clone())));
        out
    }
}
