use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    /// Multiplicative learning-rate decay applied every `decay_interval` steps.
    pub decay: f64,
    pub decay_interval: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-5, decay: 0.9, decay_interval: 300, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl OptimizerState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        OptimizerState { config, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    /// base * decay^floor(step / interval)
    pub fn lr_at(&self, step: u64) -> f64 {
        let c = &self.config;
        c.lr * c.decay.powi((step / c.decay_interval.max(1)) as i32)
    }

    pub fn current_lr(&self) -> f64 {
        self.lr_at(self.step)
    }
}

/// One Adam update in place; returns the learning rate that was used.
pub fn adam_step(state: &mut OptimizerState, params: &mut [f64], grads: &[f64]) -> Result<f64> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(Error::invalid(format!(
            "adam shapes differ: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    let lr = state.current_lr();
    let c = state.config;
    let t = (state.step + 1) as i32;
    let (bc1, bc2) = (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t));
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + c.eps);
    }
    state.step += 1;
    Ok(lr)
}
