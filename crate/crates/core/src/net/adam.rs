use serde::{Deserialize, Serialize};

use super::params::Weights;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Inverse-time decay: `η_t = η₀ / (1 + decay · t)`.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global-norm clipping threshold applied before the update.
    pub grad_clip: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 0.004, lr_decay: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, grad_clip: Some(5.0) }
    }
}

impl AdamConfig {
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        self.learning_rate / (1.0 + self.lr_decay * step as f64)
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Weights,
    pub second: Weights,
    pub step: u64,
}

impl AdamState {
    pub fn new(like: &Weights) -> Self {
        let mut first = like.clone();
        first.fill(0.0);
        AdamState { second: first.clone(), first, step: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub step: u64,
    pub learning_rate: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// One bias-corrected Adam update. `grads` is clipped in place.
pub fn adam_step(params: &mut Weights, grads: &mut Weights, state: &mut AdamState, cfg: &AdamConfig) -> Result<StepInfo> {
    let grad_norm = grads.norm();
    if !grad_norm.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    if let Some(clip) = cfg.grad_clip {
        if grad_norm > clip {
            let s = clip / grad_norm;
            for (g, _) in grads.buffers_mut() {
                g.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    state.step += 1;
    let t = state.step;
    let lr = cfg.learning_rate_at(t);
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    let bufs = params
        .buffers_mut()
        .into_iter()
        .zip(grads.buffers_mut())
        .zip(state.first.buffers_mut().into_iter().zip(state.second.buffers_mut()));
    for (((p, _), (g, _)), ((m, _), (v, _))) in bufs {
        for (((pi, gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *pi -= lr * mhat / (vhat.sqrt() + cfg.epsilon);
        }
    }
    Ok(StepInfo { step: t, learning_rate: lr, grad_norm })
}
