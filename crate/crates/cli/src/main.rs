//! `occ` — experiment runner for the barrier-loss OCC toolkit.
//!
//! Subcommands: train, eval, gridsearch, gradcheck, synth, plotdata.
//! Exit codes: 0 success, 1 internal error, 2 user/config error.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use occ_core::data::{
    load_csv, make_occ_split, normalize, synth_gaussian_ring, write_csv, Dataset, LabelColumn,
    Normalizer, OccSplit, SplitSpec,
};
use occ_core::gradcheck::{check_loss_gradient, GradCheckSpec};
use occ_core::losses::{barrier_curve, LossKind};
use occ_core::metrics::{roc_points, Label, ScoredSample};
use occ_core::trainer::{
    evaluate, grid_search, scores, train, GridRow, GridSpec, SelectionMode, TrainedModel,
};
use occ_core::{OccError, Result};

use config::ExperimentConfig;

const MODEL_FILE_VERSION: &str = "occ-model-v1";

#[derive(Parser)]
#[command(name = "occ", about = "One-class classification with barrier losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file and write model/trace/report artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override train.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override output.dir from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model against a CSV dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        target_class: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per grid point; emit a results table and the best model.
    Gridsearch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel training jobs (1 = bit-reproducible output ordering).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value = "lblsig")]
        loss: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Layer dims, e.g. 4,6,6,2
        #[arg(long)]
        dims: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic Gaussian-vs-ring dataset as CSV.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        n_targets: usize,
        #[arg(long, default_value_t = 500)]
        n_outliers: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 5.0)]
        ring_radius: f64,
        #[arg(long)]
        out_file: PathBuf,
    },
    /// Emit plot-point CSVs (barrier curve, loss trace, ROC points).
    Plotdata {
        #[command(subcommand)]
        kind: PlotKind,
    },
}

#[derive(Subcommand)]
enum PlotKind {
    /// (theta, u, value) triples of the barrier on a u-grid in (−uMax, −uMin).
    Barrier {
        #[arg(long, default_value = "0.5,1,2")]
        thetas: String,
        #[arg(long, default_value_t = 0.01)]
        u_min: f64,
        #[arg(long, default_value_t = 5.0)]
        u_max: f64,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit (epoch, loss) pairs from a training loss-trace CSV.
    Losstrace {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// (FPR, TPR) pairs for a saved model on a labeled CSV dataset.
    Roc {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        target_class: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn verbose() -> bool {
    std::env::var("OCC_BARRIER_LOG").is_ok_and(|v| !v.is_empty() && v != "0" && v != "off")
}

macro_rules! vlog {
    ($($arg:tt)*) => {
        if verbose() { eprintln!($($arg)*); }
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                OccError::Config(_)
                | OccError::Validation(_)
                | OccError::Ingestion { .. }
                | OccError::Unsupported(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => cmd_train(&config, seed, out),
        Command::Eval {
            model,
            data,
            target_class,
            out,
        } => cmd_eval(&model, &data, target_class, out),
        Command::Gridsearch {
            config,
            seed,
            out,
            jobs,
        } => cmd_gridsearch(&config, seed, out, jobs),
        Command::Gradcheck {
            loss,
            seed,
            dims,
            out,
        } => cmd_gradcheck(&loss, seed, dims, out),
        Command::Synth {
            seed,
            n_targets,
            n_outliers,
            dim,
            ring_radius,
            out_file,
        } => cmd_synth(seed, n_targets, n_outliers, dim, ring_radius, &out_file),
        Command::Plotdata { kind } => cmd_plotdata(kind),
    }
}

// ---------------------------------------------------------------- artifacts

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: String,
    config: ExperimentConfig,
    model: TrainedModel,
    normalizer: Option<Normalizer>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    version: &'a str,
    config: &'a ExperimentConfig,
    seed: u64,
    report: occ_core::metrics::EvaluationReport,
}

fn f17(v: f64) -> String {
    format!("{v:.17e}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| OccError::Config(format!("serialization failed: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn build_split(cfg: &ExperimentConfig) -> Result<OccSplit> {
    let dataset: Dataset = match (&cfg.data.synth, &cfg.data.path) {
        (Some(s), _) => synth_gaussian_ring(s.seed, s.n_targets, s.n_outliers, s.dim, s.ring_radius)?,
        (None, Some(path)) => load_csv(path, cfg.label_column()?)?,
        (None, None) => {
            return Err(OccError::Config(
                "config needs either data.path or a synth.* section".into(),
            ))
        }
    };
    let spec = if cfg.data.train_rows.is_empty() {
        SplitSpec::TrainFraction {
            fraction: cfg.data.train_fraction,
            seed: cfg.data.split_seed,
        }
    } else {
        SplitSpec::ExplicitTrainRows(cfg.data.train_rows.clone())
    };
    let mut split = make_occ_split(&dataset, cfg.data.target_class, &spec)?;
    normalize(&mut split)?;
    Ok(split)
}

fn write_loss_trace(path: &Path, cfg: &ExperimentConfig, history: &[f64]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# seed = {}, loss = {}", cfg.train.seed, cfg.train.loss.kind.name())
        .expect("string write");
    writeln!(out, "epoch,loss").expect("string write");
    for (i, l) in history.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, f17(*l)).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------- commands

fn cmd_train(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    let split = build_split(&cfg)?;
    vlog!(
        "training {} on {} target rows",
        cfg.train.loss.kind.name(),
        split.train_targets.rows()
    );
    let model = train(&split, &cfg.train)?;
    let report = evaluate(&model, &split)?;
    ensure_dir(&cfg.output_dir)?;
    write_loss_trace(&cfg.output_dir.join("loss_trace.csv"), &cfg, &model.loss_history)?;
    write_json(
        &cfg.output_dir.join("report.json"),
        &ReportFile {
            version: MODEL_FILE_VERSION,
            config: &cfg,
            seed: cfg.train.seed,
            report,
        },
    )?;
    write_json(
        &cfg.output_dir.join("model.json"),
        &ModelFile {
            version: MODEL_FILE_VERSION.into(),
            config: cfg.clone(),
            normalizer: split.normalizer.clone(),
            model,
        },
    )?;
    println!("wrote model.json, loss_trace.csv, report.json to {}", cfg.output_dir.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| OccError::Config(format!("cannot read model '{}': {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| OccError::Config(format!("model parse error: {e}")))?;
    if file.version != MODEL_FILE_VERSION {
        return Err(OccError::Config(format!(
            "unsupported model version '{}' (expected {MODEL_FILE_VERSION})",
            file.version
        )));
    }
    Ok(file)
}

fn scored_samples_from_csv(
    file: &ModelFile,
    data: &Path,
    target_class: i64,
) -> Result<Vec<ScoredSample>> {
    let dataset = load_csv(data, LabelColumn::Last)?;
    let normalizer = file
        .normalizer
        .as_ref()
        .ok_or_else(|| OccError::Config("model file lacks a normalizer".into()))?;
    let features = normalizer.transform(&dataset.features)?;
    let errs = scores(&file.model, &features)?;
    Ok(errs
        .into_iter()
        .zip(&dataset.labels)
        .map(|(error, &l)| ScoredSample {
            error,
            label: if l == target_class {
                Label::Target
            } else {
                Label::Outlier
            },
        })
        .collect())
}

fn cmd_eval(model_path: &Path, data: &Path, target_class: i64, out: Option<PathBuf>) -> Result<()> {
    let file = load_model(model_path)?;
    let dataset = load_csv(data, LabelColumn::Last)?;
    let normalizer = file
        .normalizer
        .as_ref()
        .ok_or_else(|| OccError::Config("model file lacks a normalizer".into()))?;
    let features = normalizer.transform(&dataset.features)?;
    let labels: Vec<Label> = dataset
        .labels
        .iter()
        .map(|&l| {
            if l == target_class {
                Label::Target
            } else {
                Label::Outlier
            }
        })
        .collect();
    let split = OccSplit {
        train_targets: features.clone(), // unused by evaluate
        test_features: features,
        test_labels: labels,
        normalizer: file.normalizer.clone(),
    };
    let report = evaluate(&file.model, &split)?;
    let out_file = ReportFile {
        version: MODEL_FILE_VERSION,
        config: &file.config,
        seed: file.config.train.seed,
        report,
    };
    match out {
        Some(dir) => {
            ensure_dir(&dir)?;
            write_json(&dir.join("report.json"), &out_file)?;
            println!("wrote report.json to {}", dir.display());
        }
        None => println!(
            "{}",
            serde_json::to_string_pretty(&out_file)
                .map_err(|e| OccError::Config(e.to_string()))?
        ),
    }
    Ok(())
}

fn grid_rows_csv(rows: &[GridRow]) -> String {
    let mut out = String::from("learning_rate,lambda,lambda1,final_loss,validation_auc,error,selected\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f17(r.learning_rate),
            f17(r.lambda),
            f17(r.lambda1),
            r.final_loss.map(f17).unwrap_or_default(),
            r.validation_auc.map(f17).unwrap_or_default(),
            r.error.clone().unwrap_or_default().replace(',', ";"),
            r.selected
        )
        .expect("string write");
    }
    out
}

fn cmd_gridsearch(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    jobs: usize,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    let split = build_split(&cfg)?;
    let mode = cfg.selection_mode()?;
    let grid = cfg.grid_spec();
    vlog!("grid search over {} learning rates x {} lambdas, jobs={jobs}",
        grid.learning_rates.len(), grid.lambdas.len());

    // Validation-AUC selection scores held-out targets against the test-set
    // outliers; train-loss selection never touches them.
    let val_outliers = match mode {
        SelectionMode::ValidationAuc { .. } => Some(outlier_rows(&split)?),
        SelectionMode::TrainLoss => None,
    };

    let result = if jobs <= 1 || grid.learning_rates.len() <= 1 {
        grid_search(&split, &cfg.train, &grid, mode.clone(), val_outliers.as_ref())?
    } else {
        // Partition by learning rate; each chunk trains independently and the
        // chunks are merged in grid order so the row table is stable.
        let chunks: Vec<Vec<f64>> = grid
            .learning_rates
            .chunks(grid.learning_rates.len().div_ceil(jobs))
            .map(|c| c.to_vec())
            .collect();
        let partials: Vec<Result<occ_core::trainer::GridSearchResult>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunks
                    .iter()
                    .map(|lrs| {
                        let sub = GridSpec {
                            learning_rates: lrs.clone(),
                            lambdas: grid.lambdas.clone(),
                            lambda1s: grid.lambda1s.clone(),
                        };
                        let split = &split;
                        let cfg = &cfg;
                        let mode = mode.clone();
                        let val = val_outliers.as_ref();
                        scope.spawn(move || grid_search(split, &cfg.train, &sub, mode, val))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("no panic")).collect()
            });
        let mut rows: Vec<GridRow> = Vec::new();
        let mut best: Option<TrainedModel> = None;
        let mut best_key = f64::INFINITY;
        let mut winner: Option<usize> = None;
        for partial in partials {
            let mut partial = partial?;
            let offset = rows.len();
            let local_best = partial.rows.iter().position(|r| r.selected);
            for r in &mut partial.rows {
                r.selected = false;
            }
            if let (Some(i), Some(model)) = (local_best, partial.best) {
                let key = match mode {
                    SelectionMode::TrainLoss => partial.rows[i].final_loss.unwrap_or(f64::INFINITY),
                    SelectionMode::ValidationAuc { .. } => {
                        -partial.rows[i].validation_auc.unwrap_or(f64::NEG_INFINITY)
                    }
                };
                if key < best_key {
                    best_key = key;
                    best = Some(model);
                    winner = Some(offset + i);
                }
            }
            rows.extend(partial.rows);
        }
        if let Some(gi) = winner {
            rows[gi].selected = true;
        }
        occ_core::trainer::GridSearchResult {
            rows,
            best,
            selection_mode: mode,
        }
    };

    ensure_dir(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("results.csv"), grid_rows_csv(&result.rows))?;
    write_json(&cfg.output_dir.join("results.json"), &result.rows)?;
    if let Some(best) = result.best {
        let report = evaluate(&best, &split)?;
        write_json(
            &cfg.output_dir.join("report.json"),
            &ReportFile {
                version: MODEL_FILE_VERSION,
                config: &cfg,
                seed: cfg.train.seed,
                report,
            },
        )?;
        write_json(
            &cfg.output_dir.join("model.json"),
            &ModelFile {
                version: MODEL_FILE_VERSION.into(),
                config: cfg.clone(),
                normalizer: split.normalizer.clone(),
                model: best,
            },
        )?;
        println!(
            "wrote results.csv, results.json, model.json, report.json to {}",
            cfg.output_dir.display()
        );
        Ok(())
    } else {
        Err(OccError::Validation("every grid point failed".into()))
    }
}

fn outlier_rows(split: &OccSplit) -> Result<occ_core::linalg::Matrix> {
    let rows: Vec<Vec<f64>> = split
        .test_labels
        .iter()
        .zip(0..split.test_features.rows())
        .filter(|(l, _)| **l == Label::Outlier)
        .map(|(_, i)| split.test_features.row(i).to_vec())
        .collect();
    if rows.is_empty() {
        return Err(OccError::Validation(
            "validation-AUC selection needs outliers in the test split".into(),
        ));
    }
    occ_core::linalg::Matrix::from_rows(&rows)
}

fn cmd_gradcheck(loss: &str, seed: u64, dims: Option<String>, out: Option<PathBuf>) -> Result<()> {
    let kind = LossKind::parse(loss)?;
    let mut spec = GradCheckSpec::standard(kind);
    if let Some(d) = dims {
        let dims: Vec<usize> = d
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| OccError::Config(format!("bad dims entry '{s}'")))
            })
            .collect::<Result<_>>()?;
        if dims.len() < 2 {
            return Err(OccError::Config("dims needs at least two entries".into()));
        }
        if kind == LossKind::Hrn && *dims.last().expect("nonempty") != 1 {
            return Err(OccError::Config("HRN gradcheck needs output dim 1".into()));
        }
        spec.dims = dims;
    }
    let report = check_loss_gradient(&spec, seed)?;
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| OccError::Config(e.to_string()))?;
    match out {
        Some(path) => {
            std::fs::write(&path, text + "\n")?;
            println!("wrote gradient check report to {}", path.display());
        }
        None => println!("{text}"),
    }
    if report.passed {
        Ok(())
    } else {
        Err(OccError::Validation(format!(
            "gradient check failed: max rel error {}",
            report.max_rel_error
        )))
    }
}

fn cmd_synth(
    seed: u64,
    n_targets: usize,
    n_outliers: usize,
    dim: usize,
    ring_radius: f64,
    out_file: &Path,
) -> Result<()> {
    let ds = synth_gaussian_ring(seed, n_targets, n_outliers, dim, ring_radius)?;
    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_csv(out_file, &ds)?;
    println!(
        "wrote {} rows ({} targets, {} outliers) to {}",
        n_targets + n_outliers,
        n_targets,
        n_outliers,
        out_file.display()
    );
    Ok(())
}

fn emit(out: Option<PathBuf>, text: String) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(&path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_plotdata(kind: PlotKind) -> Result<()> {
    match kind {
        PlotKind::Barrier {
            thetas,
            u_min,
            u_max,
            points,
            out,
        } => {
            if !(u_min > 0.0 && u_max > u_min && points >= 2) {
                return Err(OccError::Validation(
                    "need 0 < uMin < uMax and at least 2 points".into(),
                ));
            }
            let thetas: Vec<f64> = thetas
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| OccError::Config(format!("bad theta '{s}'")))
                })
                .collect::<Result<_>>()?;
            let grid: Vec<f64> = (0..points)
                .map(|i| -(u_max - (u_max - u_min) * i as f64 / (points - 1) as f64))
                .collect();
            let rows = barrier_curve(&thetas, &grid)?;
            let mut text = String::from("theta,u,value\n");
            for (t, u, v) in rows {
                writeln!(text, "{},{},{}", f17(t), f17(u), f17(v)).expect("string write");
            }
            emit(out, text)
        }
        PlotKind::Losstrace { input, out } => {
            let content = std::fs::read_to_string(&input).map_err(|e| OccError::Config(
                format!("cannot read loss trace '{}': {e}", input.display()),
            ))?;
            let mut text = String::from("epoch,loss\n");
            for line in content.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') || line.starts_with("epoch") {
                    continue;
                }
                let (e, l) = line.split_once(',').ok_or_else(|| {
                    OccError::Validation(format!("malformed trace line '{line}'"))
                })?;
                let _: usize = e.parse().map_err(|_| {
                    OccError::Validation(format!("malformed epoch '{e}'"))
                })?;
                let l: f64 = l.parse().map_err(|_| {
                    OccError::Validation(format!("malformed loss '{l}'"))
                })?;
                writeln!(text, "{e},{}", f17(l)).expect("string write");
            }
            emit(out, text)
        }
        PlotKind::Roc {
            model,
            data,
            target_class,
            out,
        } => {
            let file = load_model(&model)?;
            let samples = scored_samples_from_csv(&file, &data, target_class)?;
            let points = roc_points(&samples)?;
            let mut text = String::from("fpr,tpr\n");
            for (fpr, tpr) in points {
                writeln!(text, "{},{}", f17(fpr), f17(tpr)).expect("string write");
            }
            emit(out, text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use occ_core::data::parse_csv;

    #[test]
    fn synth_csv_round_trips() {
        let dir = std::env::temp_dir().join("occ-synth-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ring.csv");
        cmd_synth(3, 5, 5, 2, 5.0, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let ds = parse_csv(&text, LabelColumn::Last, "ring".into()).unwrap();
        assert_eq!(ds.features.rows(), 10);
        let again = synth_gaussian_ring(3, 5, 5, 2, 5.0).unwrap();
        for i in 0..10 {
            for (a, b) in ds.features.row(i).iter().zip(again.features.row(i)) {
                assert_eq!(a, b, "row {i} differs after round trip");
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
