//! Declarative experiment configuration: flat `section.key = value` text or
//! the same keys as a JSON object. Every unset key resolves to a documented
//! default and the resolved config is echoed into every output artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use occ_core::data::LabelColumn;
use occ_core::hypersphere::CenterPolicy;
use occ_core::losses::{LossConfig, LossKind};
use occ_core::nn::Activation;
use occ_core::trainer::{GridSpec, SelectionMode, TrainConfig};
use occ_core::{OccError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub label_column: String,
    pub target_class: i64,
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Explicit training row indices; overrides train_fraction when nonempty.
    pub train_rows: Vec<usize>,
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSection {
    pub seed: u64,
    pub n_targets: usize,
    pub n_outliers: usize,
    pub dim: usize,
    pub ring_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSection {
    pub learning_rates: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub lambda1s: Vec<f64>,
    pub selection: String, // "trainloss" | "valauc"
    pub holdout_fraction: f64,
}

/// Fully resolved experiment configuration, echoed verbatim into outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub train: TrainConfig,
    pub grid: GridSection,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSection {
                path: None,
                label_column: "last".into(),
                target_class: 0,
                train_fraction: 0.5,
                split_seed: 0,
                train_rows: Vec::new(),
                synth: None,
            },
            train: TrainConfig::new(LossConfig::new(LossKind::LblSig)),
            grid: GridSection {
                learning_rates: vec![0.1, 0.01, 0.003],
                lambdas: vec![1e-3, 1.0, 1e3],
                lambda1s: vec![],
                selection: "trainloss".into(),
                holdout_fraction: 0.2,
            },
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            OccError::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        let trimmed = text.trim_start();
        let map: BTreeMap<String, String> = if trimmed.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| OccError::Config(format!("config JSON parse error: {e}")))?;
            flatten_json(&v)?
        } else {
            parse_flat(&text)?
        };
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut loss_kind: Option<LossKind> = None;
        // First pass for the loss kind so dependent defaults resolve correctly.
        if let Some(v) = map.get("loss.kind") {
            loss_kind = Some(LossKind::parse(v)?);
        }
        if let Some(kind) = loss_kind {
            cfg.train.loss = LossConfig::new(kind);
            if kind == LossKind::Hrn {
                cfg.train.output_dim = 1;
            }
        }
        for (key, value) in map {
            apply_key(&mut cfg, key, value)?;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            learning_rates: self.grid.learning_rates.clone(),
            lambdas: self.grid.lambdas.clone(),
            lambda1s: self.grid.lambda1s.clone(),
        }
    }

    pub fn selection_mode(&self) -> Result<SelectionMode> {
        match self.grid.selection.as_str() {
            "trainloss" => Ok(SelectionMode::TrainLoss),
            "valauc" => Ok(SelectionMode::ValidationAuc {
                holdout_fraction: self.grid.holdout_fraction,
            }),
            other => Err(OccError::Config(format!(
                "grid.selection must be 'trainloss' or 'valauc', got '{other}'"
            ))),
        }
    }

    pub fn label_column(&self) -> Result<LabelColumn> {
        match self.data.label_column.as_str() {
            "last" => Ok(LabelColumn::Last),
            s => s
                .parse::<usize>()
                .map(LabelColumn::Index)
                .map_err(|_| OccError::Config(format!("data.label_column '{s}' invalid"))),
        }
    }
}

fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            OccError::Config(format!("config line {}: expected 'key = value'", no + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn flatten_json(v: &serde_json::Value) -> Result<BTreeMap<String, String>> {
    fn walk(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) {
        match v {
            serde_json::Value::Object(m) => {
                for (k, v) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, v, out);
                }
            }
            serde_json::Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(scalar_to_string).collect();
                out.insert(prefix.to_string(), joined.join(","));
            }
            other => {
                out.insert(prefix.to_string(), scalar_to_string(other));
            }
        }
    }
    fn scalar_to_string(v: &serde_json::Value) -> String {
        match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
    let mut out = BTreeMap::new();
    walk("", v, &mut out);
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| OccError::Config(format!("key '{key}': cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(OccError::Config(format!(
            "key '{key}': expected boolean, got '{value}'"
        ))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse_num::<f64>(key, s.trim()))
        .collect()
}

fn synth_mut(cfg: &mut ExperimentConfig) -> &mut SynthSection {
    cfg.data.synth.get_or_insert(SynthSection {
        seed: 0,
        n_targets: 500,
        n_outliers: 500,
        dim: 2,
        ring_radius: 5.0,
    })
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "data.path" => cfg.data.path = Some(PathBuf::from(value)),
        "data.label_column" => cfg.data.label_column = value.to_string(),
        "data.target_class" => cfg.data.target_class = parse_num(key, value)?,
        "data.train_fraction" => cfg.data.train_fraction = parse_num(key, value)?,
        "data.split_seed" => cfg.data.split_seed = parse_num(key, value)?,
        "data.train_rows" => {
            cfg.data.train_rows = value
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse_num::<usize>(key, s.trim()))
                .collect::<Result<_>>()?
        }
        "synth.seed" => synth_mut(cfg).seed = parse_num(key, value)?,
        "synth.n_targets" => synth_mut(cfg).n_targets = parse_num(key, value)?,
        "synth.n_outliers" => synth_mut(cfg).n_outliers = parse_num(key, value)?,
        "synth.dim" => synth_mut(cfg).dim = parse_num(key, value)?,
        "synth.ring_radius" => synth_mut(cfg).ring_radius = parse_num(key, value)?,
        "loss.kind" => {} // handled in the first pass
        "loss.theta" => cfg.train.loss.theta = parse_num(key, value)?,
        "loss.q" | "loss.q_trunc" => cfg.train.loss.q_trunc = parse_num(key, value)?,
        "loss.lambda" => cfg.train.loss.lambda = parse_num(key, value)?,
        "loss.lambda1" => cfg.train.loss.lambda1 = parse_num(key, value)?,
        "loss.lambda2" => cfg.train.loss.lambda2 = parse_num(key, value)?,
        "loss.nu" => cfg.train.loss.nu = parse_num(key, value)?,
        "loss.hrn_exponent" => cfg.train.loss.hrn_exponent = parse_num(key, value)?,
        "loss.radius_quantile" => cfg.train.loss.radius_quantile = parse_num(key, value)?,
        "loss.radius_update_period" => {
            cfg.train.loss.radius_update_period = parse_num(key, value)?
        }
        "loss.eps_log" => cfg.train.loss.eps_log = parse_num(key, value)?,
        "loss.discard_outside" => cfg.train.loss.discard_outside = parse_bool(key, value)?,
        "train.epochs" => cfg.train.epochs = parse_num(key, value)?,
        "train.batch_size" => cfg.train.batch_size = parse_num(key, value)?,
        "train.learning_rate" => cfg.train.learning_rate = parse_num(key, value)?,
        "train.seed" => cfg.train.seed = parse_num(key, value)?,
        "train.reject_fraction" => cfg.train.reject_fraction = parse_num(key, value)?,
        "train.shuffle" => cfg.train.shuffle = parse_bool(key, value)?,
        "train.hidden_dim" => cfg.train.hidden_dim = parse_num(key, value)?,
        "train.output_dim" => cfg.train.output_dim = parse_num(key, value)?,
        "train.activation" => {
            cfg.train.activation = match value.to_ascii_lowercase().as_str() {
                "relu" => Activation::ReLU,
                "tanh" => Activation::Tanh,
                "leakyrelu" => Activation::LeakyReLU(0.01),
                s if s.starts_with("leakyrelu:") => {
                    Activation::LeakyReLU(parse_num(key, &s["leakyrelu:".len()..])?)
                }
                other => {
                    return Err(OccError::Config(format!(
                        "key '{key}': unknown activation '{other}'"
                    )))
                }
            }
        }
        "train.center" => {
            cfg.train.center_policy = match value.to_ascii_lowercase().as_str() {
                "mean-outputs" | "meanofinitialoutputs" => CenterPolicy::MeanOfInitialOutputs,
                "mean-inputs" | "meanofinputs" => CenterPolicy::MeanOfInputs,
                other => {
                    return Err(OccError::Config(format!(
                        "key '{key}': unknown center policy '{other}' \
                         (use 'mean-outputs' or 'mean-inputs')"
                    )))
                }
            }
        }
        "grid.learning_rates" => cfg.grid.learning_rates = parse_list(key, value)?,
        "grid.lambdas" => cfg.grid.lambdas = parse_list(key, value)?,
        "grid.lambda1s" => cfg.grid.lambda1s = parse_list(key, value)?,
        "grid.selection" => cfg.grid.selection = value.to_string(),
        "grid.holdout_fraction" => cfg.grid.holdout_fraction = parse_num(key, value)?,
        "output.dir" => cfg.output_dir = PathBuf::from(value),
        other => {
            return Err(OccError::Config(format!("unknown config key '{other}'")));
        }
    }
    Ok(())
}
