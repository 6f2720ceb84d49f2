use alloc::vec;
use alloc::vec::Vec;

use crate::nn::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::nn::{shape_err, NnError, Scalar, Tensor};

pub fn conv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || input + 2 * pad < kernel {
        None
    } else {
        Some((input + 2 * pad - kernel) / stride + 1)
    }
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn check<T: Scalar>(
        input: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<Self, NnError> {
        let [n, c, h, w] = input.dims4("conv2d")?;
        let [o, ci, kh, kw] = weight.dims4("conv2d")?;
        if ci != c || kh != kw {
            return Err(shape_err("conv2d", [o, c, kh, kh], weight.shape()));
        }
        let (oh, ow) = match (
            conv_output_size(h, kh, stride, pad),
            conv_output_size(w, kw, stride, pad),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => {
                return Err(shape_err(
                    "conv2d",
                    "spatial size + 2*pad >= kernel",
                    input.shape(),
                ))
            }
        };
        Ok(Self {
            n,
            c,
            h,
            w,
            o,
            k: kh,
            stride,
            pad,
            oh,
            ow,
        })
    }

    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }

    fn ohw(&self) -> usize {
        self.oh * self.ow
    }

    /// Source index for `(ki, kj)` at output `(y, x)`, or `None` inside padding.
    #[inline]
    fn src(&self, y: usize, ki: usize, len: usize) -> Option<usize> {
        (y * self.stride + ki)
            .checked_sub(self.pad)
            .filter(|&v| v < len)
    }

    fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        let ohw = self.ohw();
        for ch in 0..self.c {
            let plane = &image[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = &mut cols[((ch * self.k + ki) * self.k + kj) * ohw..][..ohw];
                    for y in 0..self.oh {
                        let dst = &mut row[y * self.ow..(y + 1) * self.ow];
                        match self.src(y, ki, self.h) {
                            None => dst.fill(T::zero()),
                            Some(sy) => {
                                let src_row = &plane[sy * self.w..(sy + 1) * self.w];
                                for (x, d) in dst.iter_mut().enumerate() {
                                    *d =
                                        self.src(x, kj, self.w).map_or(T::zero(), |sx| src_row[sx]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        let ohw = self.ohw();
        for ch in 0..self.c {
            let plane = &mut image[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = &cols[((ch * self.k + ki) * self.k + kj) * ohw..][..ohw];
                    for y in 0..self.oh {
                        let Some(sy) = self.src(y, ki, self.h) else {
                            continue;
                        };
                        for x in 0..self.ow {
                            if let Some(sx) = self.src(x, kj, self.w) {
                                plane[sy * self.w + sx] += row[y * self.ow + x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Direct 2-D cross-correlation via im2col. `input` is NCHW, `weight` is
/// `[out, in, k, k]`, output spatial size `floor((H + 2 pad - k)/stride) + 1`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, NnError> {
    let g = Geometry::check(input, weight, stride, pad)?;
    if let Some(b) = bias {
        if b.shape() != [g.o] {
            return Err(shape_err("conv2d bias", [g.o], b.shape()));
        }
    }
    let (ckk, ohw) = (g.ckk(), g.ohw());
    let mut out = vec![T::zero(); g.n * g.o * ohw];
    let mut cols = vec![T::zero(); ckk * ohw];
    for b in 0..g.n {
        g.im2col(input.slab(b), &mut cols);
        let dst = &mut out[b * g.o * ohw..(b + 1) * g.o * ohw];
        if let Some(bias) = bias {
            for (o, chunk) in dst.chunks_exact_mut(ohw).enumerate() {
                chunk.fill(bias.data()[o]);
            }
        }
        gemm_nn(weight.data(), &cols, dst, g.o, ckk, ohw);
    }
    Tensor::new(&[g.n, g.o, g.oh, g.ow], out)
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    with_bias: bool,
) -> Result<Conv2dGrads<T>, NnError> {
    let g = Geometry::check(input, weight, stride, pad)?;
    if grad_out.shape() != [g.n, g.o, g.oh, g.ow] {
        return Err(shape_err(
            "conv2d_backward",
            [g.n, g.o, g.oh, g.ow],
            grad_out.shape(),
        ));
    }
    let (ckk, ohw) = (g.ckk(), g.ohw());
    let mut d_input = vec![T::zero(); input.len()];
    let mut d_weight = vec![T::zero(); weight.len()];
    let mut d_bias = vec![T::zero(); if with_bias { g.o } else { 0 }];
    let mut cols = vec![T::zero(); ckk * ohw];
    let mut d_cols: Vec<T> = vec![T::zero(); ckk * ohw];
    for b in 0..g.n {
        let go = grad_out.slab(b);
        g.im2col(input.slab(b), &mut cols);
        gemm_nt(go, &cols, &mut d_weight, g.o, ohw, ckk);
        d_cols.fill(T::zero());
        gemm_tn(weight.data(), go, &mut d_cols, ckk, g.o, ohw);
        g.col2im(
            &d_cols,
            &mut d_input[b * g.c * g.h * g.w..(b + 1) * g.c * g.h * g.w],
        );
        for (o, db) in d_bias.iter_mut().enumerate() {
            *db += go[o * ohw..(o + 1) * ohw]
                .iter()
                .fold(T::zero(), |a, &v| a + v);
        }
    }
    Ok(Conv2dGrads {
        input: Tensor::new(input.shape(), d_input)?,
        weight: Tensor::new(weight.shape(), d_weight)?,
        bias: if with_bias {
            Some(Tensor::new(&[g.o], d_bias)?)
        } else {
            None
        },
    })
}
