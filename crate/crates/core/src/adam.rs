//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{OccError, Result};
use crate::nn::{ModelParams, ParamGrads};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<(Vec<f64>, Vec<f64>)>, // per layer: (weight, bias)
    pub second_moment: Vec<(Vec<f64>, Vec<f64>)>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams, learning_rate: f64) -> Self {
        let zeros: Vec<(Vec<f64>, Vec<f64>)> = params
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weight.data().len()], vec![0.0; l.bias.len()]))
            .collect();
        AdamState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &ParamGrads, state: &mut AdamState) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(OccError::dimension("gradient layer count mismatch"));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (li, (layer, grad)) in params.layers.iter_mut().zip(&grads.layers).enumerate() {
        if layer.weight.data().len() != grad.weight.data().len()
            || layer.bias.len() != grad.bias.len()
        {
            return Err(OccError::dimension(format!(
                "gradient shape mismatch at layer {li}"
            )));
        }
        let (mw, mb) = &mut state.first_moment[li];
        let (vw, vb) = &mut state.second_moment[li];
        update_slice(
            layer.weight.data_mut(),
            grad.weight.data(),
            mw,
            vw,
            state.beta1,
            state.beta2,
            state.epsilon,
            state.learning_rate,
            bc1,
            bc2,
        );
        update_slice(
            &mut layer.bias,
            &grad.bias,
            mb,
            vb,
            state.beta1,
            state.beta2,
            state.epsilon,
            state.learning_rate,
            bc1,
            bc2,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    w: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..w.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
