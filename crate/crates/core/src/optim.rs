use crate::autograd::Parameter;
use crate::error::{ArcError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &[&Parameter]) -> Self {
        let zeros = |p: &&Parameter| Tensor::zeros(p.value().rows(), p.value().cols());
        Adam {
            cfg,
            step: 0,
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(ArcError::invalid(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;

        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            if m.shape() != p.value().shape() {
                return Err(ArcError::dim(
                    "adam_step",
                    format!("moment {:?} for parameter {}", m.shape(), p.name()),
                ));
            }
            let grad = p.grad().clone();
            let value = p.value_mut().data_mut();
            for i in 0..value.len() {
                let g = grad.data()[i];
                value[i] *= decay;
                let mi = beta1 * m.data()[i] + (1.0 - beta1) * g;
                let vi = beta2 * v.data()[i] + (1.0 - beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                value[i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
            }
            if !p.value().is_finite() {
                return Err(ArcError::NonFinite("adam_step"));
            }
            p.zero_grad();
        }
        Ok(())
    }
}
