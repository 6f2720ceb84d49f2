use alloc::vec;

use crate::nn::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::nn::{shape_err, NnError, Scalar, Tensor};

/// `y = x W^T + b` with `x: [N, in]`, `W: [out, in]`, `b: [out]`.
pub fn linear_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let [n, fan_in] = input.dims2("linear")?;
    let [fan_out, w_in] = weight.dims2("linear")?;
    if w_in != fan_in {
        return Err(shape_err("linear", [fan_out, fan_in], weight.shape()));
    }
    if bias.shape() != [fan_out] {
        return Err(shape_err("linear bias", [fan_out], bias.shape()));
    }
    let mut out = vec![T::zero(); n * fan_out];
    for row in out.chunks_exact_mut(fan_out) {
        row.copy_from_slice(bias.data());
    }
    gemm_nt(input.data(), weight.data(), &mut out, n, fan_in, fan_out);
    Tensor::new(&[n, fan_out], out)
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn linear_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<LinearGrads<T>, NnError> {
    let [n, fan_in] = input.dims2("linear_backward")?;
    let [fan_out, _] = weight.dims2("linear_backward")?;
    if grad_out.shape() != [n, fan_out] {
        return Err(shape_err("linear_backward", [n, fan_out], grad_out.shape()));
    }
    let mut d_input = vec![T::zero(); n * fan_in];
    gemm_nn(
        grad_out.data(),
        weight.data(),
        &mut d_input,
        n,
        fan_out,
        fan_in,
    );
    let mut d_weight = vec![T::zero(); fan_out * fan_in];
    gemm_tn(
        grad_out.data(),
        input.data(),
        &mut d_weight,
        fan_out,
        n,
        fan_in,
    );
    let mut d_bias = vec![T::zero(); fan_out];
    for row in grad_out.data().chunks_exact(fan_out) {
        d_bias.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
    }
    Ok(LinearGrads {
        input: Tensor::new(input.shape(), d_input)?,
        weight: Tensor::new(weight.shape(), d_weight)?,
        bias: Tensor::new(&[fan_out], d_bias)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_product() {
        let x = Tensor::new(&[1, 2], vec![1.0f64, 2.0]).unwrap();
        let w = Tensor::new(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let b = Tensor::new(&[3], vec![0.5, 0.0, -1.0]).unwrap();
        assert_eq!(linear_forward(&x, &w, &b).unwrap().data(), &[1.5, 2.0, 2.0]);
        let bad = Tensor::<f64>::zeros(&[3, 3]);
        assert!(linear_forward(&x, &bad, &b).is_err());
    }
}
