//! Stateless forward/backward kernels. Layers in [`crate::nn`] wrap these
//! with parameter storage and activation caches.

mod activation;
mod conv;
mod linear;
mod loss;
mod norm;
mod pool;

pub use activation::{relu, relu_backward};
pub use conv::{conv2d_backward, conv2d_forward, conv_output_size, Conv2dGrads};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use loss::{argmax, cross_entropy, softmax, softmax_rows, CrossEntropy};
pub use norm::{batchnorm2d_backward, batchnorm2d_forward, BatchNormCache, BatchNormGrads};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool2d_backward, maxpool2d_forward,
    MaxPoolIndices,
};
