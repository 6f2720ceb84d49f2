//! Central finite-difference checks of every hand-written backward pass.
//!
//! Each check reduces an operation to the scalar `L = sum(r * f(inputs))`
//! for a fixed random projection `r`, so the analytic gradient is the
//! backward pass fed with `r`. Everything runs in `f64`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{
    batchnorm2d_backward, batchnorm2d_forward, conv2d_backward, conv2d_forward, cross_entropy,
    global_avg_pool, global_avg_pool_backward, linear_backward, linear_forward, maxpool2d_backward,
    maxpool2d_forward, relu, relu_backward,
};
use super::{Arch, BasicBlock, Mode, NnError, ResNet, Tensor};

/// Step for the central difference `(L(x+h) - L(x-h)) / 2h`.
pub const STEP: f64 = 1e-6;
/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`.
pub const FLOOR: f64 = 1e-6;
/// Tolerance for layer-level checks.
pub const LAYER_TOLERANCE: f64 = 1e-3;
/// Tolerance for loss-level checks.
pub const LOSS_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn project(r: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Compares `analytic[i]` with central differences of `loss` over every
/// element of every input, or over `sample` random elements per input when
/// given.
fn compare(
    name: &str,
    tolerance: f64,
    inputs: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    sample: Option<(usize, &mut ChaCha8Rng)>,
    mut loss: impl FnMut(&[Tensor<f64>]) -> Result<f64, NnError>,
) -> Result<GradCheckReport, NnError> {
    let mut work = inputs.to_vec();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut sample = sample;
    for (t, grad) in analytic.iter().enumerate() {
        let n = work[t].len();
        let positions: Vec<usize> = match &mut sample {
            Some((k, rng)) if *k < n => (0..*k).map(|_| rng.gen_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        for i in positions {
            let x0 = work[t].data()[i];
            work[t].data_mut()[i] = x0 + STEP;
            let up = loss(&work)?;
            work[t].data_mut()[i] = x0 - STEP;
            let down = loss(&work)?;
            work[t].data_mut()[i] = x0;
            worst = worst.max(rel_err(grad.data()[i], (up - down) / (2.0 * STEP)));
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        name: name.into(),
        max_rel_err: worst,
        checked,
        tolerance,
    })
}

pub fn check_conv2d(rng: &mut ChaCha8Rng) -> Result<GradCheckReport, NnError> {
    let (stride, pad) = (2, 1);
    let inputs = vec![
        random(&[2, 3, 5, 5], rng),
        random(&[4, 3, 3, 3], rng),
        random(&[4], rng),
    ];
    let y = conv2d_forward(&inputs[0], &inputs[1], Some(&inputs[2]), stride, pad)?;
    let r = random(y.shape(), rng);
    let g = conv2d_backward(&inputs[0], &inputs[1], &r, stride, pad, true)?;
    let bias = g.bias.ok_or(NnError::MissingParameter("bias".into()))?;
    compare(
        "conv2d",
        LAYER_TOLERANCE,
        &inputs,
        &[g.input, g.weight, bias],
        None,
        |v| {
            Ok(project(
                &r,
                &conv2d_forward(&v[0], &v[1], Some(&v[2]), stride, pad)?,
            ))
        },
    )
}

pub fn check_batchnorm(mode: Mode, rng: &mut ChaCha8Rng) -> Result<GradCheckReport, NnError> {
    let c = 3;
    let inputs = vec![
        random(&[2, c, 4, 4], rng),
        random(&[c], rng),
        random(&[c], rng),
    ];
    let rm = random(&[c], rng);
    let rv = Tensor::from_fn(&[c], |_| rng.gen_range(0.5..2.0));
    let run = |v: &[Tensor<f64>]| {
        let (mut m, mut s) = (rm.clone(), rv.clone());
        batchnorm2d_forward(&v[0], &v[1], &v[2], &mut m, &mut s, mode, 1e-5, 0.1)
    };
    let (y, cache) = run(&inputs)?;
    let r = random(y.shape(), rng);
    let g = batchnorm2d_backward(&cache, &inputs[1], &r)?;
    let name = match mode {
        Mode::Train => "batchnorm2d (train)",
        Mode::Eval => "batchnorm2d (eval)",
    };
    compare(
        name,
        LAYER_TOLERANCE,
        &inputs,
        &[g.input, g.gamma, g.beta],
        None,
        |v| Ok(project(&r, &run(v)?.0)),
    )
}

pub fn check_linear(rng: &mut ChaCha8Rng) -> Result<GradCheckReport, NnError> {
    let inputs = vec![
        random(&[3, 5], rng),
        random(&[4, 5], rng),
        random(&[4], rng),
    ];
    let r = random(&[3, 4], rng);
    let g = linear_backward(&inputs[0], &inputs[1], &r)?;
    compare(
        "linear",
        LAYER_TOLERANCE,
        &inputs,
        &[g.input, g.weight, g.bias],
        None,
        |v| Ok(project(&r, &linear_forward(&v[0], &v[1], &v[2])?)),
    )
}

pub fn check_maxpool(rng: &mut ChaCha8Rng) -> Result<GradCheckReport, NnError> {
    let inputs = vec![random(&[2, 2, 6, 6], rng)];
    let (y, idx) = maxpool2d_forward(&inputs[0], 3, 2, 1)?;
    let r = random(y.shape(), rng);
    let g = maxpool2d_backward(&idx, &r)?;
    compare("maxpool2d", LAYER_TOLERANCE, &inputs, &[g], None, |v| {
        Ok(project(&r, &maxpool2d_forward(&v[0], 3, 2, 1)?.0))
    })
}

pub fn check_relu_and_pool(rng: &mut ChaCha8Rng) -> Result<GradCheckReport, NnError> {
    let inputs = vec![random(&[2, 3, 3, 4], rng)];
    let r = random(&[2, 3], rng);
    let pooled_grad = global_avg_pool_backward(inputs[0].shape(), &r)?;
    let g = relu_backward(&inputs[0], &pooled_grad)?;
    compare(
        "relu + global average pool",
        LAYER_TOLERANCE,
        &inputs,
        &[g],
        None,
        |v| Ok(project(&r, &global_avg_pool(&relu(&v[0]))?)),
    )
}

/// Block parameters in visiting order.
fn block_params(block: &mut BasicBlock<f64>) -> (Vec<Tensor<f64>>, Vec<Tensor<f64>>) {
    let (mut values, mut grads) = (Vec::new(), Vec::new());
    block.visit_mut("", &mut |_, v, g| {
        if let Some(g) = g {
            values.push(v.clone());
            grads.push(g.clone());
        }
    });
    (values, grads)
}

fn set_block_params(block: &mut BasicBlock<f64>, values: &[Tensor<f64>]) {
    let mut it = values.iter();
    block.visit_mut("", &mut |_, v, g| {
        if g.is_some() {
            *v = it.next().expect("parameter count is fixed").clone();
        }
    });
}

/// Strided residual block with a projection shortcut, in train mode.
pub fn check_residual_block(rng: &mut ChaCha8Rng) -> Result<GradCheckReport, NnError> {
    let mut block = BasicBlock::<f64>::new(2, 3, 2, rng);
    let x = random(&[2, 2, 4, 4], rng);
    let mut randomized = block_params(&mut block).0;
    for p in &mut randomized {
        *p = random(p.shape(), rng);
    }
    set_block_params(&mut block, &randomized);
    let y = block.forward(&x, Mode::Train)?;
    let r = random(y.shape(), rng);
    let gx = block.backward(&r)?;
    let (values, grads) = block_params(&mut block);
    let mut inputs = vec![x];
    inputs.extend(values);
    let mut analytic = vec![gx];
    analytic.extend(grads);
    compare(
        "residual block",
        LAYER_TOLERANCE,
        &inputs,
        &analytic,
        None,
        |v| {
            let mut b = block.clone();
            set_block_params(&mut b, &v[1..]);
            Ok(project(&r, &b.forward(&v[0], Mode::Train)?))
        },
    )
}

pub fn check_cross_entropy(rng: &mut ChaCha8Rng) -> Result<GradCheckReport, NnError> {
    let logits = Tensor::from_fn(&[4, 8], |_| rng.gen_range(-3.0..3.0));
    let targets = [0, 3, 7, 3];
    let ce = cross_entropy(&logits, &targets)?;
    compare(
        "softmax + cross-entropy",
        LOSS_TOLERANCE,
        &[logits],
        &[ce.grad],
        None,
        |v| Ok(cross_entropy(&v[0], &targets)?.loss),
    )
}

/// A whole ResNet-Tiny in train mode, loss = cross-entropy; parameters are
/// sampled rather than exhausted. The input is large enough that batch
/// statistics in the last stage cover more than a couple of values.
pub fn check_resnet_tiny(rng: &mut ChaCha8Rng) -> Result<GradCheckReport, NnError> {
    let mut config = Arch::ResNetTiny.config(4);
    config.input_size = 16;
    let mut model = ResNet::<f64>::new(config, rng)?;
    let x = random(&[4, 3, 16, 16], rng);
    let targets = [1, 3, 0, 2];
    let ce = cross_entropy(&model.forward(&x, Mode::Train)?, &targets)?;
    let gx = model.backward(&ce.grad)?;
    let (mut inputs, mut analytic) = (vec![x], vec![gx]);
    model.visit_mut(&mut |_, v, g| {
        if let Some(g) = g {
            inputs.push(v.clone());
            analytic.push(g.clone());
        }
    });
    let mut sampler = ChaCha8Rng::seed_from_u64(rng.gen());
    compare(
        "resnet-tiny end to end",
        LAYER_TOLERANCE,
        &inputs,
        &analytic,
        Some((6, &mut sampler)),
        |v| {
            let mut m = model.clone();
            let mut it = v[1..].iter();
            m.visit_mut(&mut |_, p, g| {
                if g.is_some() {
                    *p = it.next().expect("parameter count is fixed").clone();
                }
            });
            Ok(cross_entropy(&m.forward(&v[0], Mode::Train)?, &targets)?.loss)
        },
    )
}

/// Runs every check with one seed.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckReport>, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reports = vec![
        check_conv2d(&mut rng)?,
        check_batchnorm(Mode::Train, &mut rng)?,
        check_batchnorm(Mode::Eval, &mut rng)?,
        check_linear(&mut rng)?,
        check_maxpool(&mut rng)?,
        check_relu_and_pool(&mut rng)?,
        check_residual_block(&mut rng)?,
        check_cross_entropy(&mut rng)?,
        check_resnet_tiny(&mut rng)?,
    ];
    Ok(reports)
}

impl core::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = format!(
            "{}: max rel err {:.3e} over {} entries (tol {:.0e})",
            self.name, self.max_rel_err, self.checked, self.tolerance
        );
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_uses_floor() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert_eq!(rel_err(1e-9, 0.0), 1e-3);
        assert_eq!(rel_err(2.0, 1.0), 0.5);
    }

    #[test]
    fn broken_gradient_is_caught() {
        let inputs = vec![Tensor::from_fn(&[3], |i| i as f64)];
        let wrong = vec![Tensor::from_fn(&[3], |i| 2.0 * i as f64 + 0.1)];
        let report = compare("square", LAYER_TOLERANCE, &inputs, &wrong, None, |v| {
            Ok(v[0].data().iter().map(|x| x * x).sum())
        })
        .unwrap();
        assert!(!report.passed());
    }
}
