use alloc::vec;
use alloc::vec::Vec;

use super::mlp::{Gradients, Mlp};
use super::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW optimizer state: first and second moments per parameter, in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new<T: Real>(model: &Mlp<T>, config: AdamWConfig) -> Self {
        let sizes: Vec<usize> = model
            .layers()
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        Self {
            config,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    /// One decoupled-weight-decay update:
    /// `w <- w (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps)`.
    pub fn step<T: Real>(&mut self, model: &mut Mlp<T>, grads: &Gradients<T>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - libm::pow(c.beta1, t as f64);
        let bias2 = 1.0 - libm::pow(c.beta2, t as f64);
        let decay = 1.0 - c.learning_rate * c.weight_decay;
        let mut slot = 0;
        for (layer, g) in model.layers_mut().iter_mut().zip(grads) {
            for (params, grad) in [(&mut layer.weights, &g.weights), (&mut layer.bias, &g.bias)] {
                let m = &mut self.first[slot];
                let v = &mut self.second[slot];
                for i in 0..params.len() {
                    let gi = grad[i].as_f64();
                    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    let update = c.learning_rate * (m_hat / (libm::sqrt(v_hat) + c.epsilon));
                    params[i] = T::from_f64(params[i].as_f64() * decay - update);
                }
                slot += 1;
            }
        }
    }
}
