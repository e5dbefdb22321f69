use serde::{Deserialize, Serialize};

use super::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(like: &ModelParams) -> Self {
        AdamState {
            m: like.zeros_like(),
            v: like.zeros_like(),
            t: 0,
        }
    }
}

/// Bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut ModelParams, state: &mut AdamState, grads: &ModelParams, cfg: &AdamConfig) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
        .zip(grads.tensors());
    for ((((_, p), (_, m)), (_, v)), (_, g)) in tensors {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}
