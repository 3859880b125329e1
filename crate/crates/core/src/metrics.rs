//! Threshold-free AUC, confusion counts at a threshold, and G-mean.

use serde::{Deserialize, Serialize};

use crate::error::{OccError, Result};
use crate::hypersphere::{decide, Decision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Target,
    Outlier,
}

#[derive(Debug, Clone, Copy)]
pub struct ScoredSample {
    /// Distance-to-center anomaly error; higher means more anomalous.
    pub error: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// None when the test set has a single class.
    pub auc: Option<f64>,
    pub gmean: Option<f64>,
    pub counts: ConfusionCounts,
    pub threshold: f64,
    pub n_targets: usize,
    pub n_outliers: usize,
}

/// Mann-Whitney AUC: probability that a random outlier scores a strictly
/// higher error than a random target, ties at half weight. O(n log n).
pub fn auc(samples: &[ScoredSample]) -> Result<f64> {
    let n_targets = samples.iter().filter(|s| s.label == Label::Target).count();
    let n_outliers = samples.len() - n_targets;
    if n_targets == 0 || n_outliers == 0 {
        return Err(OccError::validation(
            "AUC needs at least one target and one outlier",
        ));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        samples[a]
            .error
            .partial_cmp(&samples[b].error)
            .expect("finite errors")
    });
    // Rank sum of the outlier class with midranks for ties.
    let mut rank_sum_outliers = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && samples[order[j + 1]].error == samples[order[i]].error {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if samples[idx].label == Label::Outlier {
                rank_sum_outliers += midrank;
            }
        }
        i = j + 1;
    }
    let n_o = n_outliers as f64;
    let n_t = n_targets as f64;
    let u = rank_sum_outliers - n_o * (n_o + 1.0) / 2.0;
    Ok(u / (n_o * n_t))
}

/// G-mean: sqrt(TPR × TNR) with Target as the positive class.
pub fn gmean(counts: &ConfusionCounts) -> Result<f64> {
    let n_targets = counts.true_positives + counts.false_negatives;
    let n_outliers = counts.true_negatives + counts.false_positives;
    if n_targets == 0 || n_outliers == 0 {
        return Err(OccError::validation("G-mean needs both classes present"));
    }
    let tpr = counts.true_positives as f64 / n_targets as f64;
    let tnr = counts.true_negatives as f64 / n_outliers as f64;
    Ok((tpr * tnr).sqrt())
}

/// Tally decisions against labels at threshold η. Target is positive.
pub fn confusion(samples: &[ScoredSample], eta: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts {
        true_positives: 0,
        false_positives: 0,
        true_negatives: 0,
        false_negatives: 0,
    };
    for s in samples {
        match (s.label, decide(s.error, eta)) {
            (Label::Target, Decision::Target) => c.true_positives += 1,
            (Label::Target, Decision::Other) => c.false_negatives += 1,
            (Label::Outlier, Decision::Other) => c.true_negatives += 1,
            (Label::Outlier, Decision::Target) => c.false_positives += 1,
        }
    }
    c
}

/// ROC points (FPR, TPR) swept over all thresholds, Outlier treated as the
/// ROC-positive class so the trapezoidal area matches `auc`.
pub fn roc_points(samples: &[ScoredSample]) -> Result<Vec<(f64, f64)>> {
    let n_targets = samples.iter().filter(|s| s.label == Label::Target).count();
    let n_outliers = samples.len() - n_targets;
    if n_targets == 0 || n_outliers == 0 {
        return Err(OccError::validation(
            "ROC needs at least one target and one outlier",
        ));
    }
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| b.error.partial_cmp(&a.error).expect("finite errors"));
    let mut points = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].error == sorted[i].error {
            j += 1;
        }
        for s in &sorted[i..=j] {
            match s.label {
                Label::Outlier => tp += 1,
                Label::Target => fp += 1,
            }
        }
        points.push((fp as f64 / n_targets as f64, tp as f64 / n_outliers as f64));
        i = j + 1;
    }
    Ok(points)
}

/// Trapezoidal area under ROC points; cross-check for `auc`.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(targets: &[f64], outliers: &[f64]) -> Vec<ScoredSample> {
        targets
            .iter()
            .map(|&e| ScoredSample {
                error: e,
                label: Label::Target,
            })
            .chain(outliers.iter().map(|&e| ScoredSample {
                error: e,
                label: Label::Outlier,
            }))
            .collect()
    }

    #[test]
    fn auc_perfect_separation() {
        let s = samples(&[0.1, 0.2], &[0.3, 0.4]);
        assert_eq!(auc(&s).unwrap(), 1.0);
    }

    #[test]
    fn auc_all_ties() {
        let s = samples(&[1.0, 1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn auc_matches_pairwise_count() {
        // pairs: (0.1,0.3)+ (0.1,0.7)+ (0.5,0.3)- (0.5,0.7)+ => 3/4
        let s = samples(&[0.1, 0.5], &[0.3, 0.7]);
        assert_eq!(auc(&s).unwrap(), 0.75);
    }

    #[test]
    fn auc_single_class_rejected() {
        let s = samples(&[0.1], &[]);
        assert!(auc(&s).is_err());
    }

    #[test]
    fn gmean_hand_values() {
        let c = ConfusionCounts {
            true_positives: 9,
            false_negatives: 1,
            true_negatives: 5,
            false_positives: 5,
        };
        assert!((gmean(&c).unwrap() - 0.45f64.sqrt()).abs() < 1e-12);
        let perfect = ConfusionCounts {
            true_positives: 3,
            false_negatives: 0,
            true_negatives: 4,
            false_positives: 0,
        };
        assert_eq!(gmean(&perfect).unwrap(), 1.0);
        let dead = ConfusionCounts {
            true_positives: 0,
            false_negatives: 3,
            true_negatives: 4,
            false_positives: 0,
        };
        assert_eq!(gmean(&dead).unwrap(), 0.0);
    }

    #[test]
    fn confusion_hand_tally() {
        let s = samples(&[0.1, 0.9], &[0.5, 2.0]);
        let c = confusion(&s, 0.6);
        assert_eq!(c.true_positives, 1);
        assert_eq!(c.false_negatives, 1);
        assert_eq!(c.false_positives, 1);
        assert_eq!(c.true_negatives, 1);
        // eta = 0 with all errors > 0: everything Other
        let c0 = confusion(&s, 0.0);
        assert_eq!(c0.true_positives, 0);
        assert_eq!(c0.false_positives, 0);
    }

    #[test]
    fn roc_passes_through_corner_on_perfect_scores() {
        let s = samples(&[0.1, 0.2], &[0.8, 0.9]);
        let pts = roc_points(&s).unwrap();
        assert!(pts.contains(&(0.0, 1.0)));
        assert!((trapezoid_area(&pts) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn roc_area_matches_auc_with_ties() {
        let s = samples(&[0.1, 0.5, 0.5, 0.9], &[0.5, 0.7, 0.2]);
        let pts = roc_points(&s).unwrap();
        assert!((trapezoid_area(&pts) - auc(&s).unwrap()).abs() < 1e-12);
    }
}
