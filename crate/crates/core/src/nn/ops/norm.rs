use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{shape_err, Mode, NnError, Scalar, Tensor};

/// Values saved by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Scalar> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Per-channel batch normalization over `N x H x W`.
///
/// Train mode normalizes with batch statistics (accumulated in f64) and
/// moves the running statistics by `momentum`, using the unbiased variance;
/// eval mode normalizes with the running statistics.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm2d_forward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    mode: Mode,
    eps: f64,
    momentum: f64,
) -> Result<(Tensor<T>, BatchNormCache<T>), NnError> {
    let [n, c, h, w] = input.dims4("batchnorm2d")?;
    for t in [
        gamma.shape(),
        beta.shape(),
        running_mean.shape(),
        running_var.shape(),
    ] {
        if t != [c] {
            return Err(shape_err("batchnorm2d", [c], t));
        }
    }
    let hw = h * w;
    let count = n * hw;
    let x = input.data();
    let mut normalized = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    let mut inv_stds = Vec::with_capacity(c);
    for ch in 0..c {
        let plane = |b: usize| b * c * hw + ch * hw..b * c * hw + (ch + 1) * hw;
        let (mean, var) = match mode {
            Mode::Train => {
                let mut sum = 0.0;
                for b in 0..n {
                    sum += x[plane(b)].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let mean = sum / count as f64;
                let mut sq = 0.0;
                for b in 0..n {
                    sq += x[plane(b)]
                        .iter()
                        .map(|v| {
                            let d = v.as_f64() - mean;
                            d * d
                        })
                        .sum::<f64>();
                }
                let var = sq / count as f64;
                let unbiased = if count > 1 {
                    sq / (count - 1) as f64
                } else {
                    var
                };
                let rm = &mut running_mean.data_mut()[ch];
                *rm = T::from_f64((1.0 - momentum) * rm.as_f64() + momentum * mean);
                let rv = &mut running_var.data_mut()[ch];
                *rv = T::from_f64((1.0 - momentum) * rv.as_f64() + momentum * unbiased);
                (mean, var)
            }
            Mode::Eval => (
                running_mean.data()[ch].as_f64(),
                running_var.data()[ch].as_f64(),
            ),
        };
        let inv_std = 1.0 / libm::sqrt(var + eps);
        inv_stds.push(inv_std);
        let (g, bt) = (gamma.data()[ch].as_f64(), beta.data()[ch].as_f64());
        for b in 0..n {
            for i in plane(b) {
                let xh = (x[i].as_f64() - mean) * inv_std;
                normalized[i] = T::from_f64(xh);
                out[i] = T::from_f64(g * xh + bt);
            }
        }
    }
    let cache = BatchNormCache {
        normalized: Tensor::new(input.shape(), normalized)?,
        inv_std: inv_stds,
        mode,
    };
    Ok((Tensor::new(input.shape(), out)?, cache))
}

pub fn batchnorm2d_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>, NnError> {
    let [n, c, h, w] = cache.normalized.dims4("batchnorm2d_backward")?;
    if grad_out.shape() != cache.normalized.shape() {
        return Err(shape_err(
            "batchnorm2d_backward",
            cache.normalized.shape(),
            grad_out.shape(),
        ));
    }
    let hw = h * w;
    let m = (n * hw) as f64;
    let (xh, dy) = (cache.normalized.data(), grad_out.data());
    let mut dx = vec![T::zero(); dy.len()];
    let mut d_gamma = vec![T::zero(); c];
    let mut d_beta = vec![T::zero(); c];
    for ch in 0..c {
        let plane = |b: usize| b * c * hw + ch * hw..b * c * hw + (ch + 1) * hw;
        let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
        for b in 0..n {
            for i in plane(b) {
                sum_dy += dy[i].as_f64();
                sum_dy_xh += dy[i].as_f64() * xh[i].as_f64();
            }
        }
        d_gamma[ch] = T::from_f64(sum_dy_xh);
        d_beta[ch] = T::from_f64(sum_dy);
        let scale = gamma.data()[ch].as_f64() * cache.inv_std[ch];
        for b in 0..n {
            for i in plane(b) {
                let g = match cache.mode {
                    Mode::Train => {
                        scale * (dy[i].as_f64() - sum_dy / m - xh[i].as_f64() * sum_dy_xh / m)
                    }
                    Mode::Eval => scale * dy[i].as_f64(),
                };
                dx[i] = T::from_f64(g);
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::new(grad_out.shape(), dx)?,
        gamma: Tensor::new(&[c], d_gamma)?,
        beta: Tensor::new(&[c], d_beta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_stats(t: &Tensor<f64>, ch: usize) -> (f64, f64) {
        let [n, c, h, w] = t.dims4("test").unwrap();
        let vals: Vec<f64> = (0..n)
            .flat_map(|b| t.data()[(b * c + ch) * h * w..(b * c + ch + 1) * h * w].to_vec())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (mean, var.sqrt())
    }

    #[test]
    fn train_mode_output_has_gamma_beta_moments() {
        let x = Tensor::<f64>::from_fn(&[3, 2, 4, 5], |i| ((i * 7919) % 113) as f64 * 0.37 - 11.0);
        let gamma = Tensor::new(&[2], vec![1.5, 0.5]).unwrap();
        let beta = Tensor::new(&[2], vec![-2.0, 3.0]).unwrap();
        let mut rm = Tensor::zeros(&[2]);
        let mut rv = Tensor::full(&[2], 1.0);
        let (y, _) =
            batchnorm2d_forward(&x, &gamma, &beta, &mut rm, &mut rv, Mode::Train, 1e-5, 0.1)
                .unwrap();
        for ch in 0..2 {
            let (mean, std) = channel_stats(&y, ch);
            assert!((mean - beta.data()[ch]).abs() < 1e-4);
            assert!((std - gamma.data()[ch]).abs() < 1e-4);
        }
        // Running stats moved 10% of the way towards the batch statistics.
        let (mean0, _) = channel_stats(&x, 0);
        assert!((rm.data()[0] - 0.1 * mean0).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_with_unit_running_stats() {
        let x = Tensor::<f64>::from_fn(&[1, 1, 2, 2], |i| i as f64 - 1.5);
        let gamma = Tensor::full(&[1], 1.0);
        let beta = Tensor::zeros(&[1]);
        let mut rm = Tensor::zeros(&[1]);
        let mut rv = Tensor::full(&[1], 1.0);
        let eps = 1e-5;
        let (y, _) =
            batchnorm2d_forward(&x, &gamma, &beta, &mut rm, &mut rv, Mode::Eval, eps, 0.1).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b / (1.0 + eps).sqrt()).abs() < 1e-15);
        }
        assert_eq!(rm.data(), &[0.0]);
    }

    #[test]
    fn parameter_length_checked() {
        let x = Tensor::<f32>::zeros(&[1, 3, 2, 2]);
        let p = Tensor::<f32>::zeros(&[2]);
        let (mut rm, mut rv) = (Tensor::zeros(&[3]), Tensor::zeros(&[3]));
        assert!(batchnorm2d_forward(&x, &p, &p, &mut rm, &mut rv, Mode::Train, 1e-5, 0.1).is_err());
    }
}
