//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Adam hyperparameters. The defaults are the standard ones.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 {
            return Err(Error::Config(format!(
                "adam alpha must be > 0, got {}",
                self.alpha
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < v && v < 1.0) {
                return Err(Error::Config(format!(
                    "adam {name} must be in (0,1), got {v}"
                )));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "adam epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// First/second moment accumulators for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> AdamState {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step on a flat parameter tensor.
///
/// Aborts without touching `param` or `state` when the gradient contains a
/// non-finite value.
pub fn adam_step(
    param: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.m.len() {
        return Err(Error::Config(format!(
            "adam shape mismatch: param {}, grad {}, state {}",
            param.len(),
            grad.len(),
            state.m.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(
            "adam step aborted: non-finite gradient".into(),
        ));
    }
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        param[i] -= cfg.alpha * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}
