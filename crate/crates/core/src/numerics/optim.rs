use serde::{Deserialize, Serialize};

use super::{Parameter, Tensor};
use crate::error::{BlancError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment (Adam) state: one pair of moment accumulators per parameter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, params: &[Parameter]) -> Self {
        OptimizerState {
            config,
            step: 0,
            first: params.iter().map(|p| p.value.zeros_like()).collect(),
            second: params.iter().map(|p| p.value.zeros_like()).collect(),
        }
    }

    /// Applies one update using the gradients stored in `params`.
    ///
    /// Gradients are validated before anything is modified, so a NaN leaves
    /// both parameters and state untouched.
    pub fn step(&mut self, params: &mut [Parameter]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(BlancError::dim("optimizer_step", self.first.len(), params.len()));
        }
        for (p, m) in params.iter().zip(&self.first) {
            if p.grad.shape() != m.shape() || p.value.shape() != m.shape() {
                return Err(BlancError::dim(
                    "optimizer_step",
                    format!("{:?}", m.shape()),
                    format!("{} {:?}", p.name, p.grad.shape()),
                ));
            }
            if !p.grad.is_finite() {
                return Err(BlancError::Numeric {
                    param: p.name.clone(),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let g = p.grad.data();
            let value = p.value.data_mut();
            for (((x, &gi), mi), vi) in value
                .iter_mut()
                .zip(g)
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *x -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
