use alloc::vec;
use alloc::vec::Vec;

use super::conv_output_size;
use crate::nn::{shape_err, NnError, Scalar, Tensor};

/// Flat input index of the selected maximum for every output cell.
#[derive(Debug, Clone)]
pub struct MaxPoolIndices {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// Max pooling with implicit `-inf` padding. Ties resolve to the first
/// maximum in row-major window order.
pub fn maxpool2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, MaxPoolIndices), NnError> {
    let [n, c, h, w] = input.dims4("maxpool2d")?;
    if pad * 2 > kernel {
        return Err(shape_err("maxpool2d", "pad <= kernel/2", pad));
    }
    let (oh, ow) = match (
        conv_output_size(h, kernel, stride, pad),
        conv_output_size(w, kernel, stride, pad),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(shape_err(
                "maxpool2d",
                "spatial size + 2*pad >= kernel",
                input.shape(),
            ))
        }
    };
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best: Option<(T, usize)> = None;
                for ki in 0..kernel {
                    let Some(sy) = (y * stride + ki).checked_sub(pad).filter(|&v| v < h) else {
                        continue;
                    };
                    for kj in 0..kernel {
                        let Some(sx) = (xo * stride + kj).checked_sub(pad).filter(|&v| v < w)
                        else {
                            continue;
                        };
                        let idx = base + sy * w + sx;
                        if best.is_none_or(|(b, _)| x[idx] > b) {
                            best = Some((x[idx], idx));
                        }
                    }
                }
                // pad <= kernel/2 guarantees every window touches the input.
                let (v, idx) = best.expect("pooling window inside input");
                out.push(v);
                argmax.push(idx);
            }
        }
    }
    Ok((
        Tensor::new(&[n, c, oh, ow], out)?,
        MaxPoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2d_backward<T: Scalar>(
    indices: &MaxPoolIndices,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if grad_out.len() != indices.argmax.len() {
        return Err(shape_err(
            "maxpool2d_backward",
            indices.argmax.len(),
            grad_out.shape(),
        ));
    }
    let mut dx = Tensor::zeros(&indices.input_shape);
    let d = dx.data_mut();
    for (&i, &g) in indices.argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(dx)
}

/// `[N, C, H, W] -> [N, C]` spatial mean, accumulated in f64.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let [n, c, h, w] = input.dims4("global_avg_pool")?;
    let hw = h * w;
    let out = input
        .data()
        .chunks_exact(hw)
        .map(|plane| T::from_f64(plane.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64))
        .collect();
    Tensor::new(&[n, c], out)
}

pub fn global_avg_pool_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let &[n, c, h, w] = input_shape else {
        return Err(shape_err("global_avg_pool_backward", "NCHW", input_shape));
    };
    if grad_out.shape() != [n, c] {
        return Err(shape_err(
            "global_avg_pool_backward",
            [n, c],
            grad_out.shape(),
        ));
    }
    let scale = T::from_f64(1.0 / (h * w) as f64);
    let mut data = vec![T::zero(); n * c * h * w];
    for (plane, &g) in data.chunks_exact_mut(h * w).zip(grad_out.data()) {
        plane.fill(g * scale);
    }
    Tensor::new(input_shape, data)
}
