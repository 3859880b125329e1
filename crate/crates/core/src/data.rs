//! CSV ingestion, OCC split construction, min-max normalization, and the
//! synthetic Gaussian-vs-ring dataset used for desk-scale experiments.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OccError, Result};
use crate::linalg::Matrix;
use crate::metrics::Label;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<i64>,
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer {
    /// Per-feature (min, max) fitted on training targets only.
    pub ranges: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct OccSplit {
    pub train_targets: Matrix,
    pub test_features: Matrix,
    pub test_labels: Vec<Label>,
    pub normalizer: Option<Normalizer>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum LabelColumn {
    Last,
    Index(usize),
}

pub fn load_csv(path: &Path, label_column: LabelColumn) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| OccError::Ingestion {
        location: path.display().to_string(),
        message: e.to_string(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_csv(&text, label_column, name)
}

pub fn parse_csv(text: &str, label_column: LabelColumn, name: String) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut width = None;
    let mut skipped_header = false;
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let label_idx = match label_column {
            LabelColumn::Last => cells.len() - 1,
            LabelColumn::Index(i) => i,
        };
        if label_idx >= cells.len() {
            return Err(OccError::Ingestion {
                location: format!("row {}", line_no + 1),
                message: format!("label column {label_idx} out of range ({} cells)", cells.len()),
            });
        }
        // Header autodetection: skip the first row if any cell is non-numeric.
        if rows.is_empty() && !skipped_header {
            let numeric = cells.iter().all(|c| c.parse::<f64>().is_ok());
            if !numeric {
                skipped_header = true;
                continue;
            }
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(OccError::Ingestion {
                    location: format!("row {}", line_no + 1),
                    message: format!("ragged row: {} cells, expected {w}", cells.len()),
                });
            }
            _ => {}
        }
        let mut feat = Vec::with_capacity(cells.len() - 1);
        for (col, cell) in cells.iter().enumerate() {
            if col == label_idx {
                // Labels may be integral floats ("1.0") in the wild.
                let v: f64 = cell.parse().map_err(|_| OccError::Ingestion {
                    location: format!("row {}, column {}", line_no + 1, col + 1),
                    message: format!("non-numeric label '{cell}'"),
                })?;
                labels.push(v as i64);
            } else {
                let v: f64 = cell.parse().map_err(|_| OccError::Ingestion {
                    location: format!("row {}, column {}", line_no + 1, col + 1),
                    message: format!("non-numeric cell '{cell}'"),
                })?;
                feat.push(v);
            }
        }
        rows.push(feat);
    }
    if rows.is_empty() {
        return Err(OccError::Ingestion {
            location: name,
            message: "no data rows".into(),
        });
    }
    Ok(Dataset {
        features: Matrix::from_rows(&rows)?,
        labels,
        name,
    })
}

pub fn write_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::new();
    for i in 0..dataset.features.rows() {
        for v in dataset.features.row(i) {
            // Round-trippable float formatting.
            write!(out, "{v}", v = FloatCell(*v)).expect("string write");
            out.push(',');
        }
        writeln!(out, "{}", dataset.labels[i]).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct FloatCell(f64);
impl std::fmt::Display for FloatCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Shortest representation that round-trips through f64 parsing.
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub enum SplitSpec {
    /// Fraction of target rows used for training, selected with a seeded shuffle.
    TrainFraction { fraction: f64, seed: u64 },
    /// Explicit training row indices into the dataset.
    ExplicitTrainRows(Vec<usize>),
}

pub fn make_occ_split(dataset: &Dataset, target_class: i64, spec: &SplitSpec) -> Result<OccSplit> {
    let target_rows: Vec<usize> = dataset
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == target_class)
        .map(|(i, _)| i)
        .collect();
    if target_rows.is_empty() {
        return Err(OccError::validation(format!(
            "target class {target_class} not present in dataset"
        )));
    }
    let train_idx: Vec<usize> = match spec {
        SplitSpec::TrainFraction { fraction, seed } => {
            if !(*fraction > 0.0 && *fraction <= 1.0) {
                return Err(OccError::validation("train fraction out of (0, 1]"));
            }
            let mut order = target_rows.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            // Fisher-Yates
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let n_train = ((order.len() as f64) * fraction).round().max(1.0) as usize;
            let mut idx = order[..n_train.min(order.len())].to_vec();
            idx.sort_unstable();
            idx
        }
        SplitSpec::ExplicitTrainRows(rows) => {
            for &r in rows {
                if r >= dataset.labels.len() {
                    return Err(OccError::validation(format!("train row {r} out of range")));
                }
                if dataset.labels[r] != target_class {
                    return Err(OccError::validation(format!(
                        "train row {r} has class {}, not target {target_class}",
                        dataset.labels[r]
                    )));
                }
            }
            rows.clone()
        }
    };
    let in_train: std::collections::HashSet<usize> = train_idx.iter().copied().collect();
    let mut train_rows = Vec::with_capacity(train_idx.len());
    for &i in &train_idx {
        train_rows.push(dataset.features.row(i).to_vec());
    }
    let mut test_rows = Vec::new();
    let mut test_labels = Vec::new();
    for i in 0..dataset.labels.len() {
        if in_train.contains(&i) {
            continue;
        }
        test_rows.push(dataset.features.row(i).to_vec());
        test_labels.push(if dataset.labels[i] == target_class {
            Label::Target
        } else {
            Label::Outlier
        });
    }
    if test_rows.is_empty() {
        return Err(OccError::validation("split leaves an empty test set"));
    }
    Ok(OccSplit {
        train_targets: Matrix::from_rows(&train_rows)?,
        test_features: Matrix::from_rows(&test_rows)?,
        test_labels,
        normalizer: None,
    })
}

impl Normalizer {
    /// Fit per-feature (min, max) on the training targets only.
    pub fn fit(train: &Matrix) -> Self {
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); train.cols()];
        for r in 0..train.rows() {
            for (range, &v) in ranges.iter_mut().zip(train.row(r)) {
                range.0 = range.0.min(v);
                range.1 = range.1.max(v);
            }
        }
        Normalizer { ranges }
    }

    /// Map to [−1, 1]: x' = 2(x − min)/(max − min) − 1, constant features to 0,
    /// out-of-range values clamped.
    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.ranges.len() {
            return Err(OccError::dimension(format!(
                "feature width {} vs fitted {}",
                features.cols(),
                self.ranges.len()
            )));
        }
        let mut out = features.clone();
        for r in 0..out.rows() {
            for (v, &(lo, hi)) in out.row_mut(r).iter_mut().zip(&self.ranges) {
                *v = if hi > lo {
                    (2.0 * (*v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

/// Normalize a split in place: fit on train targets, transform both sides.
pub fn normalize(split: &mut OccSplit) -> Result<()> {
    let norm = Normalizer::fit(&split.train_targets);
    split.train_targets = norm.transform(&split.train_targets)?;
    split.test_features = norm.transform(&split.test_features)?;
    split.normalizer = Some(norm);
    Ok(())
}

/// Standard-normal targets (class 0) vs. ring outliers (class 1) on a sphere
/// of the given radius with ±10% radial jitter.
pub fn synth_gaussian_ring(
    seed: u64,
    n_targets: usize,
    n_outliers: usize,
    dim: usize,
    ring_radius: f64,
) -> Result<Dataset> {
    if dim < 2 {
        return Err(OccError::validation("ring dataset needs dim >= 2"));
    }
    if ring_radius <= 0.0 {
        return Err(OccError::validation("ring radius must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_targets + n_outliers);
    let mut labels = Vec::with_capacity(n_targets + n_outliers);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    for _ in 0..n_targets {
        rows.push((0..dim).map(|_| gauss(&mut rng)).collect::<Vec<f64>>());
        labels.push(0);
    }
    for _ in 0..n_outliers {
        let dir: Vec<f64> = (0..dim).map(|_| gauss(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let r = ring_radius * (1.0 + rng.gen_range(-0.1..0.1));
        rows.push(dir.iter().map(|v| v / norm * r).collect());
        labels.push(1);
    }
    Ok(Dataset {
        features: Matrix::from_rows(&rows)?,
        labels,
        name: format!("synth-ring-{seed}"),
    })
}
