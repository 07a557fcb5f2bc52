//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::{Gradients, MlpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state; moment shapes mirror the model parameters exactly.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Gradients,
    second_moment: Gradients,
    step_count: u64,
    params: AdamParams,
}

impl AdamState {
    pub fn new(model: &MlpModel, params: AdamParams) -> Self {
        Self {
            first_moment: Gradients::zeros_like(model),
            second_moment: Gradients::zeros_like(model),
            step_count: 0,
            params,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn params(&self) -> AdamParams {
        self.params
    }
}

/// One Adam update. Deterministic given `(model, state, grads)`; rejects
/// non-finite gradients before touching any parameter.
pub fn adam_step(model: &mut MlpModel, state: &mut AdamState, grads: &Gradients) -> Result<()> {
    if !state.first_moment.shape_matches(model) || !grads.shape_matches(model) {
        return Err(Error::ShapeMismatch {
            context: "adam_step gradients",
            expected: model.param_count(),
            got: grads.weights.iter().map(Vec::len).sum::<usize>()
                + grads.biases.iter().map(Vec::len).sum::<usize>(),
        });
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            context: "adam_step gradients",
            step: state.step_count as usize,
        });
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let AdamParams {
        lr,
        beta1,
        beta2,
        eps,
    } = state.params;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    let (weights, biases) = model.params_mut();
    let slots = weights
        .iter_mut()
        .zip(&mut state.first_moment.weights)
        .zip(&mut state.second_moment.weights)
        .zip(&grads.weights)
        .chain(
            biases
                .iter_mut()
                .zip(&mut state.first_moment.biases)
                .zip(&mut state.second_moment.biases)
                .zip(&grads.biases),
        );
    for (((param, m), v), g) in slots {
        for i in 0..param.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
