//! Finite-difference oracle for every analytic gradient in the toolkit.
//!
//! Central differences with the radius and center frozen across evaluations;
//! the radius is not differentiable by construction, so perturbing it would
//! invalidate the check.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Matrix;
use crate::losses::{LossConfig, LossKind};
use crate::nn::{Activation, ModelParams};
use crate::trainer::batch_loss_and_grad;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss_kind: LossKind,
    pub seed: u64,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// (layer, flat index within weight matrix or usize::MAX-offset for bias)
    pub worst_location: (usize, usize),
    pub passed: bool,
    pub step: f64,
    pub tolerance: f64,
    pub failure_cause: Option<String>,
}

pub struct GradCheckSpec {
    pub dims: Vec<usize>,
    pub batch: usize,
    pub loss: LossConfig,
    pub step: f64,
    pub tolerance: f64,
}

impl GradCheckSpec {
    pub fn standard(kind: LossKind) -> Self {
        let mut loss = LossConfig::new(kind);
        loss.lambda = 0.5;
        loss.lambda2 = 0.5;
        let (dims, tolerance) = match kind {
            // nested differentiation of the H-penalty is noisier
            LossKind::Hrn => (vec![4, 6, 6, 1], 1e-4),
            _ => (vec![4, 6, 6, 2], 1e-5),
        };
        GradCheckSpec {
            dims,
            batch: 5,
            loss,
            step: 1e-5,
            tolerance,
        }
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Compare analytic gradients against central finite differences entry by entry.
pub fn check_loss_gradient(spec: &GradCheckSpec, seed: u64) -> Result<GradCheckReport> {
    // Tanh keeps the loss twice differentiable so central differences are
    // clean; the piecewise-linear activations can straddle a kink.
    let params = ModelParams::from_dims(&spec.dims, Activation::Tanh, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(101));
    let input_dim = spec.dims[0];
    let rows: Vec<Vec<f64>> = (0..spec.batch)
        .map(|_| (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let inputs = Matrix::from_rows(&rows)?;
    let out_dim = *spec.dims.last().expect("nonempty dims");
    let center: Vec<f64> = (0..out_dim).map(|_| rng.gen_range(-0.2..0.2)).collect();

    // Place the boundary comfortably outside every sample so the barrier is
    // well conditioned across all perturbed evaluations.
    let (outputs, _) = crate::nn::forward(&params, &inputs)?;
    let distances = crate::losses::distance(&outputs, &center)?;
    let d_max = distances.iter().cloned().fold(0.0, f64::max);
    let radius = (2.0 * d_max).max(1.0);

    let (_, analytic, _) = batch_loss_and_grad(&params, &inputs, &center, radius, &spec.loss)?;

    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut worst = (0, 0);
    let mut failure: Option<String> = None;
    let n_layers = params.layers.len();
    for li in 0..n_layers {
        let w_len = params.layers[li].weight.data().len();
        let b_len = params.layers[li].bias.len();
        for idx in 0..w_len + b_len {
            let mut plus = params.clone();
            let mut minus = params.clone();
            if idx < w_len {
                plus.layers[li].weight.data_mut()[idx] += spec.step;
                minus.layers[li].weight.data_mut()[idx] -= spec.step;
            } else {
                plus.layers[li].bias[idx - w_len] += spec.step;
                minus.layers[li].bias[idx - w_len] -= spec.step;
            }
            let (lp, _, _) = batch_loss_and_grad(&plus, &inputs, &center, radius, &spec.loss)?;
            let (lm, _, _) = batch_loss_and_grad(&minus, &inputs, &center, radius, &spec.loss)?;
            if !lp.is_finite() || !lm.is_finite() {
                failure = Some(format!(
                    "loss not finite at perturbed point (layer {li}, entry {idx})"
                ));
                continue;
            }
            let numeric = (lp - lm) / (2.0 * spec.step);
            let a = if idx < w_len {
                analytic.layers[li].weight.data()[idx]
            } else {
                analytic.layers[li].bias[idx - w_len]
            };
            let abs = (a - numeric).abs();
            let rel = rel_error(a, numeric);
            if rel > max_rel {
                max_rel = rel;
                worst = (li, idx);
            }
            max_abs = max_abs.max(abs);
        }
    }
    let passed = failure.is_none() && max_rel <= spec.tolerance;
    Ok(GradCheckReport {
        loss_kind: spec.loss.kind,
        seed,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        worst_location: worst,
        passed,
        step: spec.step,
        tolerance: spec.tolerance,
        failure_cause: failure,
    })
}
