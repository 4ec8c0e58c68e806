use alloc::vec::Vec;

use super::{Tensor, TensorError};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        Adam {
            config,
            m: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<(), TensorError> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: (params.len(), 0),
                right: (grads.len(), 0),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(c.beta1, t);
        let bc2 = 1.0 - libm::pow(c.beta2, t);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one, wd) = (T::one(), T::from_f64(c.weight_decay));
        let (lr, eps) = (T::from_f64(c.lr), T::from_f64(c.eps));
        let (bc1, bc2) = (T::from_f64(bc1), T::from_f64(bc2));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let pd = p.data_mut();
            for k in 0..pd.len() {
                let gk = g.data()[k] + wd * pd[k];
                let mk = b1 * m.data()[k] + (one - b1) * gk;
                let vk = b2 * v.data()[k] + (one - b2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let mhat = mk / bc1;
                let vhat = vk / bc2;
                pd[k] = pd[k] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
