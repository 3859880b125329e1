//! End-to-end training: initialize model and center, iterate epochs/batches
//! computing distances, radius, loss, and Adam updates; then fit the
//! rejection threshold and expose prediction and evaluation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamState};
use crate::data::OccSplit;
use crate::error::{OccError, Result};
use crate::hypersphere::{
    compute_threshold, decide, init_center, radius_lbl, radius_quantile_slack,
    radius_sbl_quantile, CenterPolicy, Decision, HypersphereState,
};
use crate::linalg::Matrix;
use crate::losses::{
    hrn_loss, lbl_loss, lblsig_loss, mse_ocl_loss, sbl_loss, BatchLossResult, LossConfig, LossKind,
};
use crate::metrics::{auc, confusion, gmean, EvaluationReport, Label, ScoredSample};
use crate::nn::{backward, forward, input_jacobian_norm_sq, Activation, ModelParams, ParamGrads};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub reject_fraction: f64,
    pub shuffle: bool,
    pub hidden_dim: usize,
    /// Output-space dimensionality; HRN forces 1.
    pub output_dim: usize,
    pub activation: Activation,
    pub center_policy: CenterPolicy,
}

impl TrainConfig {
    pub fn new(loss: LossConfig) -> Self {
        let output_dim = if loss.kind == LossKind::Hrn { 1 } else { 32 };
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 0,
            loss,
            reject_fraction: 0.1,
            shuffle: true,
            hidden_dim: 32,
            output_dim,
            activation: Activation::LeakyReLU(0.01),
            center_policy: CenterPolicy::MeanOfInitialOutputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(OccError::validation("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(OccError::validation("batchSize must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.reject_fraction) {
            return Err(OccError::validation("rejectFraction must be in [0, 1)"));
        }
        if self.loss.kind == LossKind::Hrn && self.output_dim != 1 {
            return Err(OccError::Unsupported("HRN requires outputDim = 1".into()));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub sphere: HypersphereState,
    /// Shift making HRN scores nonnegative; zero for hypersphere losses.
    pub score_offset: f64,
    pub loss_history: Vec<f64>,
    pub config: TrainConfig,
}

/// Total loss (data term + regularization) and its exact parameter gradients
/// for one batch, with the radius and center frozen. Shared by the trainer
/// and the finite-difference gradient checker.
pub fn batch_loss_and_grad(
    params: &ModelParams,
    inputs: &Matrix,
    center: &[f64],
    radius: f64,
    cfg: &LossConfig,
) -> Result<(f64, ParamGrads, BatchLossResult)> {
    let (outputs, cache) = forward(params, inputs)?;
    let result = match cfg.kind {
        LossKind::MseOcl => mse_ocl_loss(&outputs, center)?,
        LossKind::Lbl => lbl_loss(&outputs, center, radius, cfg)?,
        LossKind::Sbl => sbl_loss(&outputs, center, radius, cfg)?,
        LossKind::LblSig => {
            if cfg.discard_outside {
                lblsig_discarding(&outputs, center, radius, cfg)?
            } else {
                lblsig_loss(&outputs, center, radius, cfg)?
            }
        }
        LossKind::Hrn => {
            let penalties: Vec<f64> = (0..inputs.rows())
                .map(|i| input_jacobian_norm_sq(params, inputs.row(i)).map(|(v, _)| v))
                .collect::<Result<_>>()?;
            hrn_loss(&outputs, &penalties, cfg)?
        }
    };
    let mut grads = backward(params, &cache, &result.output_grad)?;
    let mut loss = result.loss_value;

    if cfg.kind == LossKind::Hrn {
        // H-regularization gradient: λ (q/2) S^{q/2−1} ∂S/∂W per sample.
        let q = cfg.hrn_exponent;
        for i in 0..inputs.rows() {
            let (s, s_grads) = input_jacobian_norm_sq(params, inputs.row(i))?;
            let coeff = if (q - 2.0).abs() < 1e-12 {
                cfg.lambda
            } else if s > 0.0 {
                cfg.lambda * (q / 2.0) * s.powf(q / 2.0 - 1.0)
            } else {
                0.0
            };
            if coeff != 0.0 {
                grads.add_scaled(&s_grads, coeff);
            }
        }
    } else {
        // (λ/2) Σ ‖W‖²_F on weights only; SBL uses λ₂.
        let reg = if cfg.kind == LossKind::Sbl {
            cfg.lambda2
        } else {
            cfg.lambda
        };
        if reg > 0.0 {
            loss += reg / 2.0 * params.weight_norm_sq();
            for (g, p) in grads.layers.iter_mut().zip(&params.layers) {
                for (gv, pv) in g.weight.data_mut().iter_mut().zip(p.weight.data()) {
                    *gv += reg * pv;
                }
            }
        }
    }
    Ok((loss, grads, result))
}

// Drop samples with D > R from the batch before evaluating LBLSig, then
// scatter their (zero) gradients back into full-batch positions.
fn lblsig_discarding(
    outputs: &Matrix,
    center: &[f64],
    radius: f64,
    cfg: &LossConfig,
) -> Result<BatchLossResult> {
    let distances = crate::losses::distance(outputs, center)?;
    let kept: Vec<usize> = (0..outputs.rows())
        .filter(|&i| distances[i] <= radius)
        .collect();
    if kept.is_empty() || kept.len() == outputs.rows() {
        return lblsig_loss(outputs, center, radius, cfg);
    }
    let rows: Vec<Vec<f64>> = kept.iter().map(|&i| outputs.row(i).to_vec()).collect();
    let sub = Matrix::from_rows(&rows)?;
    let inner = lblsig_loss(&sub, center, radius, cfg)?;
    let mut output_grad = Matrix::zeros(outputs.rows(), outputs.cols());
    for (k, &i) in kept.iter().enumerate() {
        for (c, &g) in inner.output_grad.row(k).iter().enumerate() {
            output_grad.set(i, c, g);
        }
    }
    Ok(BatchLossResult {
        distances,
        margins: inner.margins,
        probs: inner.probs,
        loss_value: inner.loss_value,
        output_grad,
        samples_truncated: inner.samples_truncated + (outputs.rows() - kept.len()),
    })
}

fn gather_rows(features: &Matrix, indices: &[usize]) -> Matrix {
    let rows: Vec<Vec<f64>> = indices.iter().map(|&i| features.row(i).to_vec()).collect();
    Matrix::from_rows(&rows).expect("rows from a rectangular matrix")
}

/// Algorithm: per batch compute distances, refresh the radius on schedule,
/// evaluate the loss, and take an Adam step; then fit the threshold on a
/// fresh pass over the full training set.
pub fn train(split: &OccSplit, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let n = split.train_targets.rows();
    if n == 0 {
        return Err(OccError::validation("empty training set"));
    }
    let input_dim = split.train_targets.cols();
    let mut params = ModelParams::mlp(
        input_dim,
        cfg.hidden_dim,
        cfg.output_dim,
        cfg.activation,
        cfg.seed,
    );
    let uses_sphere = cfg.loss.kind != LossKind::Hrn;
    let center = if uses_sphere {
        init_center(&cfg.center_policy, &params, &split.train_targets)?
    } else {
        Vec::new()
    };
    let mut adam = AdamState::new(&params, cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut radius = 0.0;
    let mut radius_set = false;
    let mut batch_counter = 0usize;
    let period = cfg.loss.radius_update_period.max(1);
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        if cfg.shuffle {
            for i in (1..n).rev() {
                let j = shuffle_rng.gen_range(0..=i);
                order.swap(i, j);
            }
        }
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather_rows(&split.train_targets, chunk);
            if uses_sphere && cfg.loss.kind != LossKind::MseOcl {
                // (a) distances, (b) radius on this batch's distances
                if !radius_set || batch_counter % period == 0 {
                    let (outputs, _) = forward(&params, &batch)?;
                    let d = crate::losses::distance(&outputs, &center)?;
                    radius = match cfg.loss.kind {
                        LossKind::Lbl => radius_lbl(&d)?,
                        LossKind::LblSig => radius_quantile_slack(&d, cfg.loss.radius_quantile)?,
                        LossKind::Sbl => {
                            let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
                            radius_sbl_quantile(&sq, cfg.loss.nu)?.max(0.0).sqrt()
                        }
                        _ => radius,
                    };
                    radius_set = true;
                }
            }
            let (loss, grads, _) =
                batch_loss_and_grad(&params, &batch, &center, radius, &cfg.loss)?;
            if !loss.is_finite() {
                return Err(OccError::validation(format!(
                    "non-finite loss at epoch {epoch}, batch {n_batches}"
                )));
            }
            adam_step(&mut params, &grads, &mut adam)?;
            epoch_loss += loss;
            n_batches += 1;
            batch_counter += 1;
        }
        loss_history.push(epoch_loss / n_batches as f64);
    }

    // Fresh pass over the full training set for the threshold.
    let (raw_errors, score_offset) = training_errors(&params, &split.train_targets, &center, cfg)?;
    let threshold = compute_threshold(&raw_errors, cfg.reject_fraction)?;
    Ok(TrainedModel {
        params,
        sphere: HypersphereState {
            center,
            radius,
            threshold,
        },
        score_offset,
        loss_history,
        config: cfg.clone(),
    })
}

fn training_errors(
    params: &ModelParams,
    inputs: &Matrix,
    center: &[f64],
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, f64)> {
    let (outputs, _) = forward(params, inputs)?;
    if cfg.loss.kind == LossKind::Hrn {
        let scores: Vec<f64> = (0..outputs.rows()).map(|i| -outputs.get(i, 0)).collect();
        let offset = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok((scores.iter().map(|s| s - offset).collect(), offset))
    } else {
        Ok((crate::losses::distance(&outputs, center)?, 0.0))
    }
}

/// Per-row anomaly error and decision for already-normalized inputs.
pub fn predict(model: &TrainedModel, inputs: &Matrix) -> Result<Vec<(f64, Decision)>> {
    let errors = scores(model, inputs)?;
    Ok(errors
        .into_iter()
        .map(|e| (e, decide(e, model.sphere.threshold)))
        .collect())
}

/// Anomaly errors only (distance to center, or shifted −Φ for HRN).
pub fn scores(model: &TrainedModel, inputs: &Matrix) -> Result<Vec<f64>> {
    let (outputs, _) = forward(&model.params, inputs)?;
    if model.config.loss.kind == LossKind::Hrn {
        Ok((0..outputs.rows())
            .map(|i| (-outputs.get(i, 0) - model.score_offset).max(0.0))
            .collect())
    } else {
        crate::losses::distance(&outputs, &model.sphere.center)
    }
}

/// Score the test set: threshold-free AUC plus G-mean and confusion at η.
pub fn evaluate(model: &TrainedModel, split: &OccSplit) -> Result<EvaluationReport> {
    let errs = scores(model, &split.test_features)?;
    let samples: Vec<ScoredSample> = errs
        .iter()
        .zip(&split.test_labels)
        .map(|(&error, &label)| ScoredSample { error, label })
        .collect();
    let n_targets = split
        .test_labels
        .iter()
        .filter(|&&l| l == Label::Target)
        .count();
    let n_outliers = samples.len() - n_targets;
    let both_classes = n_targets > 0 && n_outliers > 0;
    let counts = confusion(&samples, model.sphere.threshold);
    Ok(EvaluationReport {
        auc: if both_classes {
            Some(auc(&samples)?)
        } else {
            None
        },
        gmean: if both_classes {
            Some(gmean(&counts)?)
        } else {
            None
        },
        counts,
        threshold: model.sphere.threshold,
        n_targets,
        n_outliers,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Final-epoch training loss; no outlier data consulted.
    TrainLoss,
    /// AUC on held-out training targets mixed with supplied outliers.
    ValidationAuc { holdout_fraction: f64 },
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// SBL hinge trade-offs; ignored for other losses.
    pub lambda1s: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub learning_rate: f64,
    pub lambda: f64,
    pub lambda1: f64,
    pub final_loss: Option<f64>,
    pub validation_auc: Option<f64>,
    pub error: Option<String>,
    pub selected: bool,
}

pub struct GridSearchResult {
    pub rows: Vec<GridRow>,
    pub best: Option<TrainedModel>,
    pub selection_mode: SelectionMode,
}

/// Train one model per grid point; failures are recorded, not fatal.
pub fn grid_search(
    split: &OccSplit,
    base: &TrainConfig,
    grid: &GridSpec,
    mode: SelectionMode,
    validation_outliers: Option<&Matrix>,
) -> Result<GridSearchResult> {
    if grid.learning_rates.is_empty() || grid.lambdas.is_empty() {
        return Err(OccError::validation("empty hyperparameter grid"));
    }
    let lambda1s: &[f64] = if base.loss.kind == LossKind::Sbl && !grid.lambda1s.is_empty() {
        &grid.lambda1s
    } else {
        &[f64::NAN] // placeholder: single pass, keep base λ₁
    };

    // Optional holdout for validation-AUC selection.
    let (fit_split, val_samples_base) = match &mode {
        SelectionMode::ValidationAuc { holdout_fraction } => {
            let outliers = validation_outliers.ok_or_else(|| {
                OccError::validation("validation-AUC selection needs validation outliers")
            })?;
            let n = split.train_targets.rows();
            let n_hold = ((n as f64) * holdout_fraction).round().max(1.0) as usize;
            if n_hold >= n {
                return Err(OccError::validation("holdout fraction leaves no fit data"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(base.seed.wrapping_add(17));
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let hold = &order[..n_hold];
            let fit = &order[n_hold..];
            let fit_split = OccSplit {
                train_targets: gather_rows(&split.train_targets, fit),
                test_features: split.test_features.clone(),
                test_labels: split.test_labels.clone(),
                normalizer: split.normalizer.clone(),
            };
            let holdout = gather_rows(&split.train_targets, hold);
            (fit_split, Some((holdout, outliers.clone())))
        }
        SelectionMode::TrainLoss => (split.clone(), None),
    };

    let mut rows = Vec::new();
    let mut best_idx: Option<usize> = None;
    let mut best_key = f64::INFINITY;
    let mut best_model: Option<TrainedModel> = None;
    for &lr in &grid.learning_rates {
        for &lambda in &grid.lambdas {
            for &l1 in lambda1s {
                let mut cfg = base.clone();
                cfg.learning_rate = lr;
                if cfg.loss.kind == LossKind::Sbl {
                    cfg.loss.lambda2 = lambda;
                    if !l1.is_nan() {
                        cfg.loss.lambda1 = l1;
                    }
                } else {
                    cfg.loss.lambda = lambda;
                }
                let row_l1 = cfg.loss.lambda1;
                match train(&fit_split, &cfg) {
                    Ok(model) => {
                        let final_loss = *model.loss_history.last().expect("epochs >= 1");
                        let val_auc = match &val_samples_base {
                            Some((holdout, outliers)) => {
                                let mut samples: Vec<ScoredSample> = scores(&model, holdout)?
                                    .into_iter()
                                    .map(|error| ScoredSample {
                                        error,
                                        label: Label::Target,
                                    })
                                    .collect();
                                samples.extend(scores(&model, outliers)?.into_iter().map(
                                    |error| ScoredSample {
                                        error,
                                        label: Label::Outlier,
                                    },
                                ));
                                Some(auc(&samples)?)
                            }
                            None => None,
                        };
                        let key = match mode {
                            SelectionMode::TrainLoss => final_loss,
                            SelectionMode::ValidationAuc { .. } => {
                                -val_auc.expect("validation mode computes AUC")
                            }
                        };
                        if key < best_key {
                            best_key = key;
                            best_idx = Some(rows.len());
                            best_model = Some(model);
                        }
                        rows.push(GridRow {
                            learning_rate: lr,
                            lambda,
                            lambda1: row_l1,
                            final_loss: Some(final_loss),
                            validation_auc: val_auc,
                            error: None,
                            selected: false,
                        });
                    }
                    Err(e) => rows.push(GridRow {
                        learning_rate: lr,
                        lambda,
                        lambda1: row_l1,
                        final_loss: None,
                        validation_auc: None,
                        error: Some(e.to_string()),
                        selected: false,
                    }),
                }
            }
        }
    }
    if let Some(i) = best_idx {
        rows[i].selected = true;
    }
    Ok(GridSearchResult {
        rows,
        best: best_model,
        selection_mode: mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize, synth_gaussian_ring, make_occ_split, SplitSpec};

    fn tiny_split(seed: u64) -> OccSplit {
        let ds = synth_gaussian_ring(seed, 40, 40, 2, 5.0).unwrap();
        let mut split = make_occ_split(
            &ds,
            0,
            &SplitSpec::TrainFraction {
                fraction: 0.5,
                seed,
            },
        )
        .unwrap();
        normalize(&mut split).unwrap();
        split
    }

    fn tiny_cfg(kind: LossKind) -> TrainConfig {
        let mut cfg = TrainConfig::new(LossConfig::new(kind));
        cfg.epochs = 5;
        cfg.hidden_dim = 8;
        cfg.output_dim = if kind == LossKind::Hrn { 1 } else { 4 };
        cfg.batch_size = 16;
        cfg
    }

    #[test]
    fn zero_epochs_rejected() {
        let split = tiny_split(1);
        let mut cfg = tiny_cfg(LossKind::MseOcl);
        cfg.epochs = 0;
        assert!(train(&split, &cfg).is_err());
    }

    #[test]
    fn mse_on_single_sample_reduces_error() {
        let split = OccSplit {
            train_targets: Matrix::from_rows(&[vec![0.5, -0.5]]).unwrap(),
            test_features: Matrix::from_rows(&[vec![0.5, -0.5]]).unwrap(),
            test_labels: vec![Label::Target],
            normalizer: None,
        };
        let mut cfg = tiny_cfg(LossKind::MseOcl);
        cfg.center_policy = CenterPolicy::FixedVector(vec![1.0; 4]);
        cfg.epochs = 50;
        let model = train(&split, &cfg).unwrap();
        assert!(model.loss_history.last().unwrap() < model.loss_history.first().unwrap());
    }

    #[test]
    fn same_seed_reproduces_loss_history() {
        let split = tiny_split(3);
        for kind in [LossKind::MseOcl, LossKind::Lbl, LossKind::LblSig, LossKind::Sbl] {
            let cfg = tiny_cfg(kind);
            let a = train(&split, &cfg).unwrap();
            let b = train(&split, &cfg).unwrap();
            assert_eq!(a.loss_history, b.loss_history, "{kind:?}");
        }
    }

    #[test]
    fn all_losses_train_and_stay_finite() {
        let split = tiny_split(5);
        for kind in [
            LossKind::MseOcl,
            LossKind::Lbl,
            LossKind::LblSig,
            LossKind::Sbl,
            LossKind::Hrn,
        ] {
            let model = train(&split, &tiny_cfg(kind)).unwrap();
            assert!(
                model.loss_history.iter().all(|l| l.is_finite()),
                "{kind:?}: {:?}",
                model.loss_history
            );
            assert_eq!(model.loss_history.len(), 5);
        }
    }

    #[test]
    fn threshold_rejects_at_most_fraction_plus_one() {
        let split = tiny_split(7);
        let model = train(&split, &tiny_cfg(LossKind::LblSig)).unwrap();
        let preds = predict(&model, &split.train_targets).unwrap();
        let rejected = preds.iter().filter(|(_, d)| *d == Decision::Other).count();
        let n = split.train_targets.rows() as f64;
        assert!(rejected as f64 / n <= model.config.reject_fraction + 1.0 / n);
    }

    #[test]
    fn batch_prediction_matches_single_rows() {
        let split = tiny_split(9);
        let model = train(&split, &tiny_cfg(LossKind::Lbl)).unwrap();
        let all = predict(&model, &split.test_features).unwrap();
        for i in 0..3 {
            let row = Matrix::from_rows(&[split.test_features.row(i).to_vec()]).unwrap();
            let single = predict(&model, &row).unwrap();
            assert_eq!(single[0].0, all[i].0);
        }
    }

    #[test]
    fn evaluation_count_identities() {
        let split = tiny_split(11);
        let model = train(&split, &tiny_cfg(LossKind::LblSig)).unwrap();
        let report = evaluate(&model, &split).unwrap();
        let c = &report.counts;
        assert_eq!(c.true_positives + c.false_negatives, report.n_targets);
        assert_eq!(c.true_negatives + c.false_positives, report.n_outliers);
        assert!(report.auc.unwrap() > 0.5);
    }

    #[test]
    fn singleton_grid_selects_its_only_point() {
        let split = tiny_split(13);
        let grid = GridSpec {
            learning_rates: vec![0.01],
            lambdas: vec![0.0],
            lambda1s: vec![],
        };
        let res = grid_search(
            &split,
            &tiny_cfg(LossKind::MseOcl),
            &grid,
            SelectionMode::TrainLoss,
            None,
        )
        .unwrap();
        assert_eq!(res.rows.len(), 1);
        assert!(res.rows[0].selected);
        assert!(res.best.is_some());
    }

    #[test]
    fn three_by_three_grid_yields_nine_rows() {
        let split = tiny_split(15);
        let mut cfg = tiny_cfg(LossKind::LblSig);
        cfg.epochs = 2;
        let grid = GridSpec {
            learning_rates: vec![0.1, 0.01, 0.003],
            lambdas: vec![1e-3, 1.0, 1e3],
            lambda1s: vec![],
        };
        let res = grid_search(&split, &cfg, &grid, SelectionMode::TrainLoss, None).unwrap();
        assert_eq!(res.rows.len(), 9);
        assert_eq!(res.rows.iter().filter(|r| r.selected).count(), 1);
        assert!(res.rows.iter().all(|r| r.final_loss.is_some() || r.error.is_some()));
    }
}
