//! Property tests for the toolkit's stated invariants.

use proptest::prelude::*;

use occ_core::hypersphere::quantile;
use occ_core::linalg::Matrix;
use occ_core::losses::{lbl_loss, lblsig_loss, LossConfig, LossKind};
use occ_core::metrics::{auc, Label, ScoredSample};
use occ_core::nn::{forward, Activation, ModelParams};

fn scored(pairs: &[(f64, bool)]) -> Vec<ScoredSample> {
    pairs
        .iter()
        .map(|&(error, is_target)| ScoredSample {
            error,
            label: if is_target {
                Label::Target
            } else {
                Label::Outlier
            },
        })
        .collect()
}

// O(n²) pairwise oracle: P(outlier > target) + half ties.
fn auc_bruteforce(samples: &[ScoredSample]) -> f64 {
    let targets: Vec<f64> = samples
        .iter()
        .filter(|s| s.label == Label::Target)
        .map(|s| s.error)
        .collect();
    let outliers: Vec<f64> = samples
        .iter()
        .filter(|s| s.label == Label::Outlier)
        .map(|s| s.error)
        .collect();
    let mut score = 0.0;
    for &o in &outliers {
        for &t in &targets {
            if o > t {
                score += 1.0;
            } else if o == t {
                score += 0.5;
            }
        }
    }
    score / (targets.len() * outliers.len()) as f64
}

proptest! {
    #[test]
    fn quantile_within_bounds_and_monotone(
        values in prop::collection::vec(-100.0f64..100.0, 1..40),
        q1 in 0.01f64..1.0,
        q2 in 0.01f64..1.0,
    ) {
        let (lo, hi) = (q1.min(q2), q1.max(q2));
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let a = quantile(&values, lo).unwrap();
        let b = quantile(&values, hi).unwrap();
        prop_assert!(a >= min - 1e-12 && b <= max + 1e-12);
        prop_assert!(a <= b + 1e-12);
    }

    #[test]
    fn auc_matches_bruteforce(
        targets in prop::collection::vec(0u8..40, 1..30),
        outliers in prop::collection::vec(0u8..40, 1..30),
    ) {
        // coarse integer grid forces ties
        let pairs: Vec<(f64, bool)> = targets.iter().map(|&v| (v as f64 / 4.0, true))
            .chain(outliers.iter().map(|&v| (v as f64 / 4.0, false)))
            .collect();
        let s = scored(&pairs);
        let fast = auc(&s).unwrap();
        let brute = auc_bruteforce(&s);
        prop_assert!((fast - brute).abs() < 1e-12, "{fast} vs {brute}");
    }

    #[test]
    fn auc_invariant_under_increasing_transform(
        targets in prop::collection::vec(0.0f64..10.0, 1..20),
        outliers in prop::collection::vec(0.0f64..10.0, 1..20),
    ) {
        let pairs: Vec<(f64, bool)> = targets.iter().map(|&v| (v, true))
            .chain(outliers.iter().map(|&v| (v, false)))
            .collect();
        let s = scored(&pairs);
        let transformed: Vec<ScoredSample> = s.iter().map(|x| ScoredSample {
            error: x.error.exp(), // strictly increasing
            label: x.label,
        }).collect();
        prop_assert!((auc(&s).unwrap() - auc(&transformed).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_complement_under_label_swap(
        targets in prop::collection::vec(0.0f64..10.0, 1..20),
        outliers in prop::collection::vec(0.0f64..10.0, 1..20),
    ) {
        let pairs: Vec<(f64, bool)> = targets.iter().map(|&v| (v, true))
            .chain(outliers.iter().map(|&v| (v, false)))
            .collect();
        let s = scored(&pairs);
        let swapped: Vec<ScoredSample> = s.iter().map(|x| ScoredSample {
            error: x.error,
            label: match x.label {
                Label::Target => Label::Outlier,
                Label::Outlier => Label::Target,
            },
        }).collect();
        prop_assert!((auc(&s).unwrap() + auc(&swapped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let params = ModelParams::mlp(3, 5, 2, Activation::LeakyReLU(0.01), seed);
        let x = Matrix::from_rows(&[vec![0.1, -0.7, 0.4], vec![1.0, 0.0, -1.0]]).unwrap();
        let (a, _) = forward(&params, &x).unwrap();
        let (b, _) = forward(&params, &x).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }
}

// Gradient-scale ordering: samples closer to the boundary (larger u) get at
// least as large a gradient scale, for both barrier losses.
#[test]
fn margin_ordering_of_gradient_scales() {
    let cfg_lbl = LossConfig::new(LossKind::Lbl);
    let cfg_sig = LossConfig::new(LossKind::LblSig);
    let radius = 2.0f64;
    // distances increasing toward the boundary: u = d² - 4 increasing
    let ds = [0.2, 0.8, 1.3, 1.7, 1.9, 1.99];
    let rows: Vec<Vec<f64>> = ds.iter().map(|&d| vec![d]).collect();
    let outputs = Matrix::from_rows(&rows).unwrap();
    let lbl = lbl_loss(&outputs, &[0.0], radius, &cfg_lbl).unwrap();
    let sig = lblsig_loss(&outputs, &[0.0], radius, &cfg_sig).unwrap();
    // scale_i = grad_i / (2 * d_i)
    let scales = |g: &Matrix| -> Vec<f64> {
        (0..g.rows()).map(|i| g.get(i, 0) / (2.0 * ds[i])).collect()
    };
    for s in [scales(&lbl.output_grad), scales(&sig.output_grad)] {
        for w in s.windows(2) {
            assert!(w[1] >= w[0] - 1e-15, "{:?}", s);
        }
    }
}

// With λ = 0 the loss depends only on outputs, not weight magnitudes.
#[test]
fn zero_lambda_losses_ignore_weights_given_outputs() {
    let outputs = Matrix::from_rows(&[vec![0.5, 0.1], vec![-0.3, 0.2]]).unwrap();
    let center = [0.0, 0.0];
    let cfg = LossConfig::new(LossKind::Lbl);
    let a = lbl_loss(&outputs, &center, 2.0, &cfg).unwrap().loss_value;
    let b = lbl_loss(&outputs, &center, 2.0, &cfg).unwrap().loss_value;
    assert_eq!(a, b);
}
