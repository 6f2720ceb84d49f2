//! Spectrogram-to-image adaptation in front of the network stem.

use alloc::vec;
use alloc::vec::Vec;

use super::{shape_err, NnError, Tensor};
use crate::dsp::MelSpectrogram;

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Turns a one-channel spectrogram into a `[channels, size, size]` image tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputAdapter {
    pub channels: usize,
    pub size: usize,
    pub imagenet_norm: bool,
}

impl InputAdapter {
    pub fn new(channels: usize, size: usize) -> Self {
        Self {
            channels,
            size,
            imagenet_norm: false,
        }
    }
}

/// Half-pixel-centred bilinear resize of a row-major `h x w` plane.
pub fn resize_bilinear(src: &[f32], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    let axis = |dst: usize, src_len: usize, dst_len: usize| {
        let scale = src_len as f64 / dst_len as f64;
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = pos as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, (pos - i0 as f64) as f32)
    };
    let cols: Vec<_> = (0..out_w).map(|x| axis(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, h, out_h);
        for &(x0, x1, fx) in &cols {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Min-max scales the dB grid to `[0, 1]` with the highest band on top (as
/// rendered), resizes to `size x size`, and replicates across channels.
pub fn spectrogram_to_input(spec: &MelSpectrogram, adapter: &InputAdapter) -> Tensor<f32> {
    let (h, w) = (spec.n_mels(), spec.n_frames());
    let (lo, hi) = spec.min_max();
    let range = hi - lo;
    let mut plane = vec![0.0f32; h * w];
    for y in 0..h {
        let band = h - 1 - y;
        for x in 0..w {
            plane[y * w + x] = if range > 0.0 {
                (spec.get(band, x) - lo) / range
            } else {
                0.0
            };
        }
    }
    let resized = resize_bilinear(&plane, h, w, adapter.size, adapter.size);
    let mut data = Vec::with_capacity(adapter.channels * resized.len());
    for c in 0..adapter.channels {
        if adapter.imagenet_norm && adapter.channels == 3 {
            data.extend(
                resized
                    .iter()
                    .map(|v| (v - IMAGENET_MEAN[c]) / IMAGENET_STD[c]),
            );
        } else {
            data.extend_from_slice(&resized);
        }
    }
    Tensor::new(&[adapter.channels, adapter.size, adapter.size], data)
        .expect("adapter dimensions are positive")
}

/// Stacks equally shaped tensors along a new leading batch axis.
pub fn stack_batch(items: &[&Tensor<f32>]) -> Result<Tensor<f32>, NnError> {
    let first = items
        .first()
        .ok_or_else(|| shape_err("stack_batch", "non-empty batch", 0))?;
    let mut shape = vec![items.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(items.len() * first.len());
    for t in items {
        if t.shape() != first.shape() {
            return Err(shape_err("stack_batch", first.shape(), t.shape()));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::new(&shape, data)
}
