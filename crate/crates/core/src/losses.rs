//! The five OCC loss functions: per-batch loss value plus the output-side
//! gradient that feeds the network's backward pass.
//!
//! All hypersphere losses act on squared distances through the margin
//! u_i = D_i² − R²; the output-side gradient for sample i is the per-sample
//! scale applied to ∂D_i²/∂o_i = 2(o_i − c).

use serde::{Deserialize, Serialize};

use crate::error::{OccError, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    MseOcl,
    Sbl,
    Hrn,
    Lbl,
    LblSig,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::MseOcl => "mse-ocl",
            LossKind::Sbl => "sbl",
            LossKind::Hrn => "hrn",
            LossKind::Lbl => "lbl",
            LossKind::LblSig => "lblsig",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse-ocl" | "mse_ocl" | "mseocl" | "mse" => Ok(LossKind::MseOcl),
            "sbl" => Ok(LossKind::Sbl),
            "hrn" => Ok(LossKind::Hrn),
            "lbl" => Ok(LossKind::Lbl),
            "lblsig" | "lbl-sig" | "lbl_sig" => Ok(LossKind::LblSig),
            other => Err(OccError::Config(format!("unknown loss kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Approximation precision θ of the barrier.
    pub theta: f64,
    /// Relaxation constant Q: samples with u > Q get zero gradient.
    pub q_trunc: f64,
    /// Weight-regularization trade-off λ.
    pub lambda: f64,
    /// SBL trade-offs λ₁ (hinge) and λ₂ (regularization).
    pub lambda1: f64,
    pub lambda2: f64,
    /// SBL radius quantile fraction ν.
    pub nu: f64,
    /// HRN penalty exponent q.
    pub hrn_exponent: f64,
    /// Slack-radius quantile for LBLSig.
    pub radius_quantile: f64,
    /// Radius recomputation cadence, in batches.
    pub radius_update_period: usize,
    /// Barrier clamp: −u is floored at this before the log.
    pub eps_log: f64,
    /// Optionally drop samples with D > R from the LBLSig batch.
    pub discard_outside: bool,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        LossConfig {
            kind,
            theta: 1.0,
            q_trunc: 10.0,
            lambda: 0.0,
            lambda1: 1.0,
            lambda2: 0.0,
            nu: 0.1,
            hrn_exponent: 2.0,
            radius_quantile: 0.9,
            radius_update_period: 1,
            eps_log: 1e-12,
            discard_outside: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta <= 0.0 {
            return Err(OccError::validation("theta must be > 0"));
        }
        if self.q_trunc <= 0.0 {
            return Err(OccError::validation("qTrunc must be > 0"));
        }
        if !(self.radius_quantile > 0.0 && self.radius_quantile <= 1.0) {
            return Err(OccError::validation("radiusQuantile must be in (0, 1]"));
        }
        if self.eps_log <= 0.0 {
            return Err(OccError::validation("epsLog must be > 0"));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(OccError::validation("nu must be in (0, 1)"));
        }
        if self.lambda < 0.0 || self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(OccError::validation("trade-off parameters must be >= 0"));
        }
        if self.hrn_exponent < 1.0 {
            return Err(OccError::validation("hrnExponent must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BatchLossResult {
    pub distances: Vec<f64>,
    pub margins: Vec<f64>,
    /// v_i = Sig(−u_i); populated for LBLSig only.
    pub probs: Vec<f64>,
    pub loss_value: f64,
    pub output_grad: Matrix,
    pub samples_truncated: usize,
}

/// Frobenius (2-norm) distance of each output row from the center.
pub fn distance(outputs: &Matrix, center: &[f64]) -> Result<Vec<f64>> {
    if outputs.cols() != center.len() {
        return Err(OccError::dimension(format!(
            "output width {} vs center length {}",
            outputs.cols(),
            center.len()
        )));
    }
    Ok((0..outputs.rows())
        .map(|i| {
            outputs
                .row(i)
                .iter()
                .zip(center)
                .map(|(o, c)| (o - c) * (o - c))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Numerically stable log(1 + e^u).
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// Output-side gradient rows: scale_i * 2 * (o_i - c).
fn distance_output_grad(outputs: &Matrix, center: &[f64], scales: &[f64]) -> Matrix {
    let mut grad = Matrix::zeros(outputs.rows(), outputs.cols());
    for i in 0..outputs.rows() {
        let s = scales[i];
        if s == 0.0 {
            continue;
        }
        let row = grad.row_mut(i);
        for (g, (o, c)) in row.iter_mut().zip(outputs.row(i).iter().zip(center)) {
            *g = s * 2.0 * (o - c);
        }
    }
    grad
}

/// Logarithmic-barrier loss: −(1/(Nθ)) Σ log(max(−u_i, epsLog)).
pub fn lbl_loss(outputs: &Matrix, center: &[f64], radius: f64, cfg: &LossConfig) -> Result<BatchLossResult> {
    if radius <= 0.0 {
        return Err(OccError::validation("LBL requires R > 0"));
    }
    let distances = distance(outputs, center)?;
    let n = distances.len() as f64;
    let r_sq = radius * radius;
    let margins: Vec<f64> = distances.iter().map(|d| d * d - r_sq).collect();
    let inv_n_theta = 1.0 / (n * cfg.theta);
    let mut loss = 0.0;
    let mut scales = Vec::with_capacity(margins.len());
    for &u in &margins {
        let neg_u = (-u).max(cfg.eps_log);
        loss -= inv_n_theta * neg_u.ln();
        scales.push(inv_n_theta / neg_u);
    }
    let output_grad = distance_output_grad(outputs, center, &scales);
    Ok(BatchLossResult {
        distances,
        margins,
        probs: Vec::new(),
        loss_value: loss,
        output_grad,
        samples_truncated: 0,
    })
}

/// LBLSig: −(1/(Nθ)) Σ log(Sig(−min(u_i, Q))), with zero gradient past Q.
pub fn lblsig_loss(
    outputs: &Matrix,
    center: &[f64],
    radius: f64,
    cfg: &LossConfig,
) -> Result<BatchLossResult> {
    if radius < 0.0 {
        return Err(OccError::validation("LBLSig requires R >= 0"));
    }
    let distances = distance(outputs, center)?;
    let n = distances.len() as f64;
    let r_sq = radius * radius;
    let margins: Vec<f64> = distances.iter().map(|d| d * d - r_sq).collect();
    let inv_n_theta = 1.0 / (n * cfg.theta);
    let mut loss = 0.0;
    let mut truncated = 0;
    let mut probs = Vec::with_capacity(margins.len());
    let mut scales = Vec::with_capacity(margins.len());
    for &u in &margins {
        let u_eff = u.min(cfg.q_trunc);
        // −log(Sig(−u)) = softplus(u)
        loss += inv_n_theta * softplus(u_eff);
        let v = sigmoid(-u_eff);
        probs.push(v);
        if u > cfg.q_trunc {
            truncated += 1;
            scales.push(0.0);
        } else {
            scales.push(inv_n_theta * (1.0 - v));
        }
    }
    let output_grad = distance_output_grad(outputs, center, &scales);
    Ok(BatchLossResult {
        distances,
        margins,
        probs,
        loss_value: loss,
        output_grad,
        samples_truncated: truncated,
    })
}

/// Mean squared distance to the center.
pub fn mse_ocl_loss(outputs: &Matrix, center: &[f64]) -> Result<BatchLossResult> {
    let distances = distance(outputs, center)?;
    let n = distances.len() as f64;
    let loss = distances.iter().map(|d| d * d).sum::<f64>() / n;
    let scales = vec![1.0 / n; distances.len()];
    let output_grad = distance_output_grad(outputs, center, &scales);
    Ok(BatchLossResult {
        margins: distances.iter().map(|d| d * d).collect(),
        distances,
        probs: Vec::new(),
        loss_value: loss,
        output_grad,
        samples_truncated: 0,
    })
}

/// Soft-boundary loss: R² + (λ₁/N) Σ max{0, D_i² − R²}. R carries no gradient.
pub fn sbl_loss(outputs: &Matrix, center: &[f64], radius: f64, cfg: &LossConfig) -> Result<BatchLossResult> {
    if radius < 0.0 {
        return Err(OccError::validation("SBL requires R >= 0"));
    }
    let distances = distance(outputs, center)?;
    let n = distances.len() as f64;
    let r_sq = radius * radius;
    let margins: Vec<f64> = distances.iter().map(|d| d * d - r_sq).collect();
    let mut loss = r_sq;
    let mut scales = Vec::with_capacity(margins.len());
    for &u in &margins {
        if u > 0.0 {
            loss += cfg.lambda1 / n * u;
            scales.push(cfg.lambda1 / n);
        } else {
            scales.push(0.0);
        }
    }
    let output_grad = distance_output_grad(outputs, center, &scales);
    Ok(BatchLossResult {
        distances,
        margins,
        probs: Vec::new(),
        loss_value: loss,
        output_grad,
        samples_truncated: 0,
    })
}

/// HRN: NLL of Sig(Φ) plus λ Σ ‖∇ₓΦ‖_F^q. The Jacobian penalties are computed
/// by the caller via `input_jacobian_norm_sq`; this returns the NLL part and
/// its output-side gradient, plus the penalty contribution to the loss value.
pub fn hrn_loss(
    outputs: &Matrix,
    jacobian_penalties_sq: &[f64],
    cfg: &LossConfig,
) -> Result<BatchLossResult> {
    if outputs.cols() != 1 {
        return Err(OccError::Unsupported(
            "HRN requires a scalar-output network".into(),
        ));
    }
    if jacobian_penalties_sq.len() != outputs.rows() {
        return Err(OccError::dimension(
            "jacobian penalty count vs batch size",
        ));
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(outputs.rows(), 1);
    for i in 0..outputs.rows() {
        let phi = outputs.get(i, 0);
        // −log(Sig(φ)) = softplus(−φ)
        loss += softplus(-phi);
        grad.set(i, 0, -(1.0 - sigmoid(phi)));
    }
    for &s in jacobian_penalties_sq {
        loss += cfg.lambda * s.powf(cfg.hrn_exponent / 2.0);
    }
    Ok(BatchLossResult {
        distances: Vec::new(),
        margins: Vec::new(),
        probs: Vec::new(),
        loss_value: loss,
        output_grad: grad,
        samples_truncated: 0,
    })
}

/// Pointwise barrier values −(1/θ) log(−u) for plot-data emission.
pub fn barrier_curve(theta_values: &[f64], u_grid: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    for &u in u_grid {
        if u >= 0.0 {
            return Err(OccError::validation(format!(
                "barrier is only defined for u < 0, got {u}"
            )));
        }
    }
    for &t in theta_values {
        if t <= 0.0 {
            return Err(OccError::validation("theta must be > 0"));
        }
    }
    let mut out = Vec::with_capacity(theta_values.len() * u_grid.len());
    for &t in theta_values {
        for &u in u_grid {
            out.push((t, u, -(1.0 / t) * (-u).ln()));
        }
    }
    Ok(out)
}
