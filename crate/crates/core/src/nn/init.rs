use rand::Rng;

use super::{Scalar, Tensor};

/// Kaiming-uniform (fan-in, ReLU gain): `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub fn kaiming_uniform<T: Scalar, R: Rng>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = libm::sqrt(6.0 / fan_in.max(1) as f64);
    Tensor::from_fn(shape, |_| T::from_f64(rng.gen_range(-bound..bound)))
}
