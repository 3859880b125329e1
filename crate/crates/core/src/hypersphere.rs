//! Center initialization, radius schedulers, threshold fitting, and the
//! target/other decision rule.

use serde::{Deserialize, Serialize};

use crate::error::{OccError, Result};
use crate::linalg::Matrix;
use crate::nn::{forward, ModelParams};

pub const RADIUS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Target,
    Other,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CenterPolicy {
    /// Rowwise mean of the initialized model's outputs on training data.
    MeanOfInitialOutputs,
    /// Rowwise mean of the training inputs; requires outputDim = inputDim.
    MeanOfInputs,
    FixedVector(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypersphereState {
    pub center: Vec<f64>,
    pub radius: f64,
    pub threshold: f64,
}

/// Linear-interpolation quantile between closest ranks:
/// h = q(n−1), result = x_⌊h⌋ + (h−⌊h⌋)(x_⌈h⌉ − x_⌊h⌋) on the sorted values.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(OccError::validation("quantile of empty input"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(OccError::validation(format!("quantile q={q} out of [0,1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn init_center(
    policy: &CenterPolicy,
    model: &ModelParams,
    train_inputs: &Matrix,
) -> Result<Vec<f64>> {
    match policy {
        CenterPolicy::MeanOfInitialOutputs => {
            let (outputs, _) = forward(model, train_inputs)?;
            Ok(outputs.column_means())
        }
        CenterPolicy::MeanOfInputs => {
            if model.output_dim() != model.input_dim() {
                return Err(OccError::validation(
                    "MeanOfInputs center requires outputDim = inputDim",
                ));
            }
            Ok(train_inputs.column_means())
        }
        CenterPolicy::FixedVector(v) => {
            if v.len() != model.output_dim() {
                return Err(OccError::dimension(format!(
                    "fixed center length {} vs output dim {}",
                    v.len(),
                    model.output_dim()
                )));
            }
            Ok(v.clone())
        }
    }
}

/// LBL radius reset: R = 2 · max D_i, floored when all distances are zero.
pub fn radius_lbl(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(OccError::validation("radius reset needs distances"));
    }
    let max = distances.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        Ok(RADIUS_FLOOR)
    } else {
        Ok(2.0 * max)
    }
}

/// Slack radius: q-th quantile of the distances.
pub fn radius_quantile_slack(distances: &[f64], q: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(OccError::validation("radius needs distances"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(OccError::validation(format!("radius quantile q={q} out of (0,1]")));
    }
    quantile(distances, q)
}

/// SBL radius rule: R² is the (1 − ν)-quantile of the squared distances.
pub fn radius_sbl_quantile(squared_distances: &[f64], nu: f64) -> Result<f64> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(OccError::validation(format!("nu={nu} out of (0,1)")));
    }
    quantile(squared_distances, 1.0 - nu)
}

/// Threshold η: the (1 − rejectFraction)-quantile of training errors.
pub fn compute_threshold(train_errors: &[f64], reject_fraction: f64) -> Result<f64> {
    if train_errors.is_empty() {
        return Err(OccError::validation("threshold needs training errors"));
    }
    if !(0.0..1.0).contains(&reject_fraction) {
        return Err(OccError::validation(format!(
            "rejectFraction {reject_fraction} out of [0,1)"
        )));
    }
    quantile(train_errors, 1.0 - reject_fraction)
}

/// Decision rule: error ≤ η accepts the sample as target.
#[inline]
pub fn decide(error: f64, eta: f64) -> Decision {
    if error <= eta {
        Decision::Target
    } else {
        Decision::Other
    }
}
