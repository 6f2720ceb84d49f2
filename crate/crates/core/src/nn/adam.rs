use alloc::vec;
use alloc::vec::Vec;

use super::{shape_err, NnError, ResNet, Scalar, Tensor};

/// Adam hyperparameters. The default learning rate is 3e-5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one slot per parameter tensor, created
/// zeroed on first use.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, slot: usize) -> Option<&[T]> {
        self.m.get(slot).map(Vec::as_slice)
    }

    pub fn second_moment(&self, slot: usize) -> Option<&[T]> {
        self.v.get(slot).map(Vec::as_slice)
    }

    fn begin_step(&mut self) -> (f64, f64) {
        self.t += 1;
        let t = self.t as i32;
        (
            1.0 - libm::pow(self.config.beta1, f64::from(t)),
            1.0 - libm::pow(self.config.beta2, f64::from(t)),
        )
    }

    fn update_slot(
        &mut self,
        slot: usize,
        param: &mut [T],
        grad: &[T],
        corr: (f64, f64),
    ) -> Result<(), NnError> {
        if param.len() != grad.len() {
            return Err(shape_err("adam_step", param.len(), grad.len()));
        }
        while self.m.len() <= slot {
            self.m.push(Vec::new());
            self.v.push(Vec::new());
        }
        if self.m[slot].is_empty() {
            self.m[slot] = vec![T::zero(); param.len()];
            self.v[slot] = vec![T::zero(); param.len()];
        }
        if self.m[slot].len() != param.len() {
            return Err(shape_err("adam_step", self.m[slot].len(), param.len()));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..param.len() {
            let g = grad[i].as_f64();
            let mi = beta1 * m[i].as_f64() + (1.0 - beta1) * g;
            let vi = beta2 * v[i].as_f64() + (1.0 - beta2) * g * g;
            m[i] = T::from_f64(mi);
            v[i] = T::from_f64(vi);
            let m_hat = mi / corr.0;
            let v_hat = vi / corr.1;
            param[i] = T::from_f64(param[i].as_f64() - lr * m_hat / (libm::sqrt(v_hat) + eps));
        }
        Ok(())
    }

    /// One update of `params` from `grads`; slot `i` holds the moments of `params[i]`.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[&Tensor<T>],
    ) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(shape_err("adam_step", params.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(shape_err("adam_step", p.shape(), g.shape()));
            }
        }
        let corr = self.begin_step();
        for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.update_slot(slot, p.data_mut(), g.data(), corr)?;
        }
        Ok(())
    }

    /// Updates every model parameter whose name passes `trainable`, using the
    /// gradients accumulated by the last backward pass.
    pub fn step_model(
        &mut self,
        model: &mut ResNet<T>,
        trainable: impl Fn(&str) -> bool,
    ) -> Result<(), NnError> {
        let corr = self.begin_step();
        let mut slot = 0;
        let mut result = Ok(());
        model.visit_mut(&mut |name, value, grad| {
            let Some(grad) = grad else { return };
            if result.is_ok() && trainable(name) {
                result = self.update_slot(slot, value.data_mut(), grad.data(), corr);
            }
            slot += 1;
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(p0: f64, g: f64, config: AdamConfig) -> f64 {
        let mut p = Tensor::scalar(p0);
        let grad = Tensor::scalar(g);
        let mut state = AdamState::new(config);
        state.step(&mut [&mut p], &[&grad]).unwrap();
        p.data()[0]
    }

    #[test]
    fn zero_gradient_leaves_params() {
        assert_eq!(scalar_step(0.7, 0.0, AdamConfig::default()), 0.7);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let cfg = AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        };
        for g in [2.5, -0.01, 40.0] {
            // At t=1 the bias-corrected moments are g and g^2.
            let expected = cfg.lr * g / (g.abs() + cfg.eps);
            let delta = 1.0 - scalar_step(1.0, g, cfg);
            assert!((delta - expected).abs() < 1e-15);
            assert!((delta - cfg.lr * g.signum()).abs() < cfg.lr * 1e-5);
        }
    }

    #[test]
    fn default_lr_step_magnitude() {
        let delta = 0.0 - scalar_step(0.0, 1.0, AdamConfig::default());
        assert!((delta - 3e-5).abs() < 1e-9);
        let mut p = Tensor::scalar(0.0f32);
        AdamState::new(AdamConfig::default())
            .step(&mut [&mut p], &[&Tensor::scalar(1.0f32)])
            .unwrap();
        assert!((f64::from(p.data()[0]) + 3e-5).abs() < 1e-9);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        assert_eq!(scalar_step(-3.25, 17.0, cfg), -3.25);
    }

    #[test]
    fn shapes_must_agree() {
        let mut p = Tensor::<f32>::zeros(&[2]);
        let g = Tensor::<f32>::zeros(&[3]);
        let mut state = AdamState::new(AdamConfig::default());
        assert!(state.step(&mut [&mut p], &[&g]).is_err());
        assert!(state.step(&mut [&mut p], &[]).is_err());
    }

    #[test]
    fn moments_start_at_zero_and_accumulate() {
        let mut p = Tensor::scalar(0.0f64);
        let g = Tensor::scalar(2.0f64);
        let mut state = AdamState::new(AdamConfig::default());
        assert_eq!(state.step_count(), 0);
        state.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(state.step_count(), 1);
        assert!((state.first_moment(0).unwrap()[0] - 0.2).abs() < 1e-15);
        assert!((state.second_moment(0).unwrap()[0] - 0.004).abs() < 1e-15);
    }
}
