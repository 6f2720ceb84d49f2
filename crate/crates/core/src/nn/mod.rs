//! A small CPU tensor stack with hand-written backward passes: enough to
//! build, train and run ResNet-style classifiers.
//!
//! Kernels are generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

mod adam;
mod checkpoint;
mod gemm;
pub mod gradcheck;
mod init;
mod input;
mod layers;
pub mod ops;
mod resnet;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use init::kaiming_uniform;
pub use input::{resize_bilinear, spectrogram_to_input, stack_batch, InputAdapter};
pub use layers::{BasicBlock, BatchNorm2d, Conv2d, Linear, Mode, SlotKind};
pub use resnet::{Arch, LayerSpec, LoadMode, ResNet, ResNetConfig};
pub use tensor::{Scalar, Tensor};

use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("model has no final linear layer")]
    NoFinalLinear,
    #[error("missing parameter {0:?}")]
    MissingParameter(String),
    #[error("unexpected parameter {0:?}")]
    UnexpectedParameter(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("backward called before forward in {0}")]
    NoForwardCache(&'static str),
}

pub(crate) fn shape_err(
    op: &'static str,
    expected: impl core::fmt::Debug,
    got: impl core::fmt::Debug,
) -> NnError {
    NnError::ShapeMismatch {
        op,
        expected: alloc::format!("{expected:?}"),
        got: alloc::format!("{got:?}"),
    }
}
