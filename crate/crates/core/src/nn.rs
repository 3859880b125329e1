//! Dense MLP with analytic forward/backward passes.
//!
//! The default backbone is a 2-hidden-layer MLP; the passes here work for any
//! number of layers so that gradient-check configurations stay flexible.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OccError, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    LeakyReLU(f64),
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::ReLU => x.max(0.0),
            Activation::LeakyReLU(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyReLU(slope) => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// Second derivative; zero almost everywhere for the piecewise-linear ones.
    #[inline]
    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::ReLU | Activation::LeakyReLU(_) => 0.0,
            Activation::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Gradient accumulators with the same shapes as `ModelParams`.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<Layer>,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ParamGrads {
            layers: params
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrads, k: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += k * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += k * y;
            }
        }
    }
}

/// Per-layer pre-activations and post-activations from one forward pass.
pub struct TapeCache {
    pub input: Matrix,
    pub pre_activations: Vec<Matrix>,
    pub post_activations: Vec<Matrix>,
}

impl ModelParams {
    /// Default backbone: input -> hidden -> hidden -> output, three weight layers.
    pub fn mlp(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        Self::from_dims(&[input_dim, hidden_dim, hidden_dim, output_dim], activation, seed)
    }

    /// Arbitrary dense stack, used by gradient-check configurations.
    pub fn from_dims(dims: &[usize], activation: Activation, seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data: Vec<f64> = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-a..a))
                    .collect();
                Layer {
                    weight: Matrix::new(fan_in, fan_out, data).expect("sized by construction"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        ModelParams { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.cols()
    }

    pub fn check_shapes(&self) -> Result<()> {
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].weight.cols() != w[1].weight.rows() {
                return Err(OccError::dimension(format!(
                    "layer {} output {} does not feed layer {} input {}",
                    i,
                    w[0].weight.cols(),
                    i + 1,
                    w[1].weight.rows()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weight.cols() {
                return Err(OccError::dimension(format!(
                    "layer {} bias length {} vs width {}",
                    i,
                    l.bias.len(),
                    l.weight.cols()
                )));
            }
        }
        Ok(())
    }

    /// Squared Frobenius norm of all weight matrices (biases excluded).
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.data().iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Batch forward pass. Hidden layers are activated, the output layer is linear.
pub fn forward(params: &ModelParams, inputs: &Matrix) -> Result<(Matrix, TapeCache)> {
    if inputs.cols() != params.input_dim() {
        return Err(OccError::dimension(format!(
            "input width {} vs model input dim {}",
            inputs.cols(),
            params.input_dim()
        )));
    }
    if inputs.rows() == 0 {
        return Err(OccError::validation("empty batch"));
    }
    if !inputs.is_finite() {
        return Err(OccError::validation("non-finite input"));
    }
    let n_layers = params.layers.len();
    let mut pre = Vec::with_capacity(n_layers);
    let mut post = Vec::with_capacity(n_layers);
    let mut current = inputs.clone();
    for (li, layer) in params.layers.iter().enumerate() {
        let mut z = current.matmul(&layer.weight)?;
        z.add_row_broadcast(&layer.bias)?;
        let a = if li + 1 < n_layers {
            z.map(|x| params.activation.apply(x))
        } else {
            z.clone()
        };
        pre.push(z);
        post.push(a.clone());
        current = a;
    }
    let outputs = current;
    Ok((
        outputs,
        TapeCache {
            input: inputs.clone(),
            pre_activations: pre,
            post_activations: post,
        },
    ))
}

/// Exact reverse pass: gradients of Σᵢ <outputGradᵢ, outputᵢ> w.r.t. all weights and biases.
pub fn backward(
    params: &ModelParams,
    cache: &TapeCache,
    output_grad: &Matrix,
) -> Result<ParamGrads> {
    let n_layers = params.layers.len();
    if cache.pre_activations.len() != n_layers {
        return Err(OccError::validation(
            "tape cache does not match model layer count",
        ));
    }
    let last = &cache.pre_activations[n_layers - 1];
    if output_grad.rows() != last.rows() || output_grad.cols() != last.cols() {
        return Err(OccError::dimension(format!(
            "output grad {}x{} vs cached output {}x{}",
            output_grad.rows(),
            output_grad.cols(),
            last.rows(),
            last.cols()
        )));
    }
    let mut grads = ParamGrads::zeros_like(params);
    // delta for the linear output layer
    let mut delta = output_grad.clone();
    for li in (0..n_layers).rev() {
        let layer_input = if li == 0 {
            &cache.input
        } else {
            &cache.post_activations[li - 1]
        };
        grads.layers[li].weight = layer_input.matmul_tn(&delta)?;
        grads.layers[li].bias = delta.column_sums();
        if li > 0 {
            let mut upstream = delta.matmul_nt(&params.layers[li].weight)?;
            let dact = cache.pre_activations[li - 1].map(|x| params.activation.derivative(x));
            upstream.mul_assign_elem(&dact)?;
            delta = upstream;
        }
    }
    Ok(grads)
}

/// Squared Frobenius norm of the input Jacobian of a scalar-output network at
/// one input point, together with its exact weight gradient.
///
/// The weight gradient is a second-order quantity; it is obtained by
/// backpropagating through the reverse sweep that produces the input gradient.
pub fn input_jacobian_norm_sq(params: &ModelParams, input: &[f64]) -> Result<(f64, ParamGrads)> {
    if params.output_dim() != 1 {
        return Err(OccError::Unsupported(
            "input Jacobian penalty requires a scalar-output network".into(),
        ));
    }
    if input.len() != params.input_dim() {
        return Err(OccError::dimension(format!(
            "input length {} vs model input dim {}",
            input.len(),
            params.input_dim()
        )));
    }
    let n_layers = params.layers.len();
    let act = params.activation;

    // Forward pass, single sample, kept as plain vectors.
    let mut zs: Vec<Vec<f64>> = Vec::with_capacity(n_layers); // pre-activations
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
    activations.push(input.to_vec());
    for (li, layer) in params.layers.iter().enumerate() {
        let prev = activations.last().expect("nonempty");
        let w = &layer.weight;
        let mut z = layer.bias.clone();
        for (r, &a) in prev.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for c in 0..w.cols() {
                z[c] += a * w.get(r, c);
            }
        }
        let a_next = if li + 1 < n_layers {
            z.iter().map(|&x| act.apply(x)).collect()
        } else {
            z.clone()
        };
        zs.push(z);
        activations.push(a_next);
    }

    // Reverse sweep for the input gradient g = ∂y/∂x.
    // p[l] = ∂y/∂z_l, r[l] = ∂y/∂a_l for hidden layers.
    let mut p: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
    let mut r_vecs: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
    p[n_layers - 1] = vec![1.0];
    for li in (0..n_layers - 1).rev() {
        let w_next = &params.layers[li + 1].weight;
        let p_next = &p[li + 1];
        let mut r = vec![0.0; w_next.rows()];
        for (j, rj) in r.iter_mut().enumerate() {
            for (k, &pk) in p_next.iter().enumerate() {
                *rj += pk * w_next.get(j, k);
            }
        }
        let pl: Vec<f64> = r
            .iter()
            .zip(&zs[li])
            .map(|(&rj, &z)| rj * act.derivative(z))
            .collect();
        r_vecs[li] = r;
        p[li] = pl;
    }
    let w0 = &params.layers[0].weight;
    let p0 = &p[0];
    let mut g = vec![0.0; w0.rows()];
    for (c, gc) in g.iter_mut().enumerate() {
        for (j, &pj) in p0.iter().enumerate() {
            *gc += pj * w0.get(c, j);
        }
    }
    let value: f64 = g.iter().map(|v| v * v).sum();

    // Reverse-of-reverse: adjoints of S = ‖g‖² w.r.t. weights, biases, and the
    // pre-activations that enter through the activation derivatives.
    let mut grads = ParamGrads::zeros_like(params);
    let mut z_hat: Vec<Vec<f64>> = zs.iter().map(|z| vec![0.0; z.len()]).collect();

    // g = p_0 · W_0ᵀ
    let g_hat: Vec<f64> = g.iter().map(|&v| 2.0 * v).collect();
    let mut p_hat: Vec<Vec<f64>> = p.iter().map(|v| vec![0.0; v.len()]).collect();
    {
        let gw = &mut grads.layers[0].weight;
        for c in 0..w0.rows() {
            for (j, &pj) in p0.iter().enumerate() {
                gw.set(c, j, gw.get(c, j) + g_hat[c] * pj);
                p_hat[0][j] += g_hat[c] * w0.get(c, j);
            }
        }
    }
    // Up the reverse chain: p_l = r_l ⊙ σ'(z_l), r_l = p_{l+1} · W_{l+1}ᵀ
    for li in 0..n_layers - 1 {
        let r_hat: Vec<f64> = p_hat[li]
            .iter()
            .zip(&zs[li])
            .map(|(&ph, &z)| ph * act.derivative(z))
            .collect();
        for ((zh, &ph), (&rl, &z)) in z_hat[li]
            .iter_mut()
            .zip(&p_hat[li])
            .zip(r_vecs[li].iter().zip(&zs[li]))
        {
            *zh += ph * rl * act.second_derivative(z);
        }
        let w_next = &params.layers[li + 1].weight;
        let p_next = p[li + 1].clone();
        let gw = &mut grads.layers[li + 1].weight;
        for (j, &rh) in r_hat.iter().enumerate() {
            if rh == 0.0 {
                continue;
            }
            for (k, &pk) in p_next.iter().enumerate() {
                gw.set(j, k, gw.get(j, k) + rh * pk);
                p_hat[li + 1][k] += rh * w_next.get(j, k);
            }
        }
    }
    // Propagate the z adjoints down the forward pass: z_l = a_{l-1} W_l + b_l.
    for li in (0..n_layers - 1).rev() {
        let zh = z_hat[li].clone();
        if zh.iter().all(|&v| v == 0.0) {
            continue;
        }
        let prev = &activations[li];
        let w = &params.layers[li].weight;
        let gw = &mut grads.layers[li].weight;
        for (c, &ac) in prev.iter().enumerate() {
            for (j, &zj) in zh.iter().enumerate() {
                gw.set(c, j, gw.get(c, j) + ac * zj);
            }
        }
        for (b, &zj) in grads.layers[li].bias.iter_mut().zip(&zh) {
            *b += zj;
        }
        if li > 0 {
            // a_{l-1} adjoint feeds z_{l-1} through the activation.
            for c in 0..w.rows() {
                let mut a_hat = 0.0;
                for (j, &zj) in zh.iter().enumerate() {
                    a_hat += zj * w.get(c, j);
                }
                z_hat[li - 1][c] += a_hat * act.derivative(zs[li - 1][c]);
            }
        }
    }
    Ok((value, grads))
}
