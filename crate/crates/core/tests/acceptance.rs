//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use occ_core::data::{make_occ_split, normalize, synth_gaussian_ring, SplitSpec};
use occ_core::gradcheck::{check_loss_gradient, GradCheckSpec};
use occ_core::hypersphere::{compute_threshold, quantile, radius_lbl};
use occ_core::linalg::Matrix;
use occ_core::losses::{barrier_curve, lbl_loss, LossConfig, LossKind};
use occ_core::metrics::{auc, Label, ScoredSample};
use occ_core::nn::{backward, forward, Activation, ModelParams, ParamGrads};
use occ_core::trainer::{
    batch_loss_and_grad, evaluate, grid_search, train, GridSpec, SelectionMode, TrainConfig,
};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pass(criterion: &str, detail: String) {
    println!("PASS {criterion}: {detail}");
}

#[test]
fn criterion_1_gradient_oracle() {
    let kinds = [
        LossKind::MseOcl,
        LossKind::Sbl,
        LossKind::Lbl,
        LossKind::LblSig,
        LossKind::Hrn,
    ];
    for kind in kinds {
        let spec = GradCheckSpec::standard(kind);
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let report = check_loss_gradient(&spec, seed).unwrap();
            assert!(
                report.passed,
                "criterion 1 FAILED for {kind:?} seed {seed}: max rel {}",
                report.max_rel_error
            );
            worst = worst.max(report.max_rel_error);
        }
        pass(
            "criterion 1 (gradient oracle)",
            format!("{kind:?} worst rel error {worst:.3e} over 20 seeds (tol {:.0e})", spec.tolerance),
        );
    }
}

#[test]
fn criterion_2_lblsig_gradient_identity() {
    let mut cfg = LossConfig::new(LossKind::LblSig);
    cfg.lambda = 0.0;
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let params = ModelParams::from_dims(&[4, 6, 6, 2], Activation::Tanh, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(500));
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let inputs = Matrix::from_rows(&rows).unwrap();
        let center: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let radius = 0.8;
        let (_, backprop, result) =
            batch_loss_and_grad(&params, &inputs, &center, radius, &cfg).unwrap();

        // Explicit route: (1/(Nθ)) Σ (1 − v_i) ∂D²_i/∂W, sample by sample.
        let n = inputs.rows() as f64;
        let mut explicit = ParamGrads::zeros_like(&params);
        for i in 0..inputs.rows() {
            let row = Matrix::from_rows(&[inputs.row(i).to_vec()]).unwrap();
            let (out, cache) = forward(&params, &row).unwrap();
            let mut g = Matrix::zeros(1, 2);
            for c in 0..2 {
                g.set(0, c, 2.0 * (out.get(0, c) - center[c]));
            }
            let d_sq_grad = backward(&params, &cache, &g).unwrap();
            let scale = if result.margins[i] > cfg.q_trunc {
                0.0
            } else {
                (1.0 - result.probs[i]) / (n * cfg.theta)
            };
            explicit.add_scaled(&d_sq_grad, scale);
        }
        for (a, b) in backprop.layers.iter().zip(&explicit.layers) {
            for (x, y) in a.weight.data().iter().zip(b.weight.data()) {
                worst = worst.max((x - y).abs());
            }
            for (x, y) in a.bias.iter().zip(&b.bias) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    assert!(worst <= 1e-10, "criterion 2 FAILED: max abs diff {worst:.3e}");
    pass(
        "criterion 2 (gradient identity)",
        format!("backprop vs explicit formula, max abs diff {worst:.3e} <= 1e-10, 10 seeds"),
    );
}

#[test]
fn criterion_3_truncation_exactness() {
    let mut cfg = LossConfig::new(LossKind::LblSig);
    cfg.lambda = 0.25;
    let params = ModelParams::from_dims(&[3, 5, 2], Activation::Tanh, 21);
    // Sample 0 is forced far outside the sphere, samples 1-2 stay inside.
    let make_inputs = |x0: f64| {
        Matrix::from_rows(&[
            vec![x0, 0.2, -0.1],
            vec![0.1, 0.0, 0.3],
            vec![-0.2, 0.4, 0.0],
        ])
        .unwrap()
    };
    let center = vec![30.0, 30.0]; // every sample far from center
    let radius = {
        // choose R so that samples 1-2 are inside Q but sample-0 stays truncated:
        // set R from sample 1's distance so its margin is small
        let (out, _) = forward(&params, &make_inputs(0.5)).unwrap();
        let d = occ_core::losses::distance(&out, &center).unwrap();
        d[1] // u_1 = 0, u_2 small, u_0 = D0² - D1² can exceed Q only if outputs differ enough
    };
    let (_, g1, r1) = batch_loss_and_grad(&params, &make_inputs(0.5), &center, radius, &cfg).unwrap();
    // Perturb only the (possibly truncated) sample's input.
    let (_, g2, r2) = batch_loss_and_grad(&params, &make_inputs(0.50001), &center, radius, &cfg).unwrap();
    // The setup must actually truncate sample 0; if output geometry makes
    // u_0 <= Q, fall back to an explicit extreme center for sample 0.
    let (g1, g2, r1) = if r1.samples_truncated >= 1 && r2.samples_truncated >= 1 {
        (g1, g2, r1)
    } else {
        let mut cfg2 = cfg.clone();
        cfg2.q_trunc = 1e-3; // force truncation of every outside sample except boundary ones
        let (_, a, ra) =
            batch_loss_and_grad(&params, &make_inputs(0.5), &center, radius, &cfg2).unwrap();
        let (_, b, rb) =
            batch_loss_and_grad(&params, &make_inputs(0.50001), &center, radius, &cfg2).unwrap();
        assert!(ra.samples_truncated >= 1 && rb.samples_truncated >= 1);
        (a, b, ra)
    };
    for (la, lb) in g1.layers.iter().zip(&g2.layers) {
        assert_eq!(
            la.weight.data(),
            lb.weight.data(),
            "criterion 3 FAILED: weight gradient changed"
        );
        assert_eq!(la.bias, lb.bias, "criterion 3 FAILED: bias gradient changed");
    }
    pass(
        "criterion 3 (truncation exactness)",
        format!(
            "perturbing a truncated sample ({} truncated) left gradients bit-identical",
            r1.samples_truncated
        ),
    );
}

#[test]
fn criterion_4_barrier_behavior() {
    let thetas = [0.5, 1.0, 2.0];
    let n = 1000;
    let grid: Vec<f64> = (0..n).map(|i| -5.0 + 4.99 * i as f64 / (n - 1) as f64).collect();
    let rows = barrier_curve(&thetas, &grid).unwrap();
    assert_eq!(rows.len(), 3 * n);
    let mut worst: f64 = 0.0;
    for (theta, u, v) in rows {
        let expect = -(1.0 / theta) * (-u).ln();
        worst = worst.max((v - expect).abs());
    }
    assert!(worst <= 1e-12, "criterion 4 FAILED: max dev {worst:.3e}");

    // Per-sample LBL loss at u = -1e-6, θ = 1 exceeds 13.
    let cfg = LossConfig::new(LossKind::Lbl);
    let d: f64 = (1.0f64 - 1e-6).sqrt();
    let out = Matrix::from_rows(&[vec![d]]).unwrap();
    let r = lbl_loss(&out, &[0.0], 1.0, &cfg).unwrap();
    assert!(r.loss_value > 13.0, "criterion 4 FAILED: {}", r.loss_value);
    pass(
        "criterion 4 (barrier behavior)",
        format!("curve dev {worst:.3e} <= 1e-12 on 1000-point grid; loss at u=-1e-6 is {:.2} > 13", r.loss_value),
    );
}

#[test]
fn criterion_5_radius_guarantees() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for batch in 0..100 {
        let n = rng.gen_range(1..50);
        let distances: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let r = radius_lbl(&distances).unwrap();
        let d_max = distances.iter().cloned().fold(0.0f64, f64::max);
        for &d in &distances {
            let u = d * d - r * r;
            assert!(
                u <= -3.0 * d_max * d_max + 1e-9,
                "criterion 5 FAILED at batch {batch}: u={u}, bound={}",
                -3.0 * d_max * d_max
            );
            if d_max > 0.0 {
                assert!(u < 0.0);
            }
        }
    }
    let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
    assert_eq!(quantile(&v, 0.5).unwrap(), 5.5);
    assert_eq!(quantile(&v, 0.9).unwrap(), 9.1);
    assert_eq!(quantile(&v, 1.0).unwrap(), 10.0);
    pass(
        "criterion 5 (radius guarantees)",
        "u_i <= -3 D_max² after reset on 100 batches; quantile {5.5, 9.1, 10} exact".into(),
    );
}

#[test]
fn criterion_6_auc_oracle() {
    fn brute(samples: &[ScoredSample]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0usize;
        for a in samples.iter().filter(|s| s.label == Label::Outlier) {
            for b in samples.iter().filter(|s| s.label == Label::Target) {
                pairs += 1;
                if a.error > b.error {
                    num += 1.0;
                } else if a.error == b.error {
                    num += 0.5;
                }
            }
        }
        num / pairs as f64
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for set in 0..200 {
        let n_t = rng.gen_range(1..=100);
        let n_o = rng.gen_range(1..=100);
        // quantized scores so ties actually occur
        let sample = |rng: &mut ChaCha8Rng, label| ScoredSample {
            error: (rng.gen_range(0..40) as f64) / 8.0,
            label,
        };
        let mut samples: Vec<ScoredSample> =
            (0..n_t).map(|_| sample(&mut rng, Label::Target)).collect();
        samples.extend((0..n_o).map(|_| sample(&mut rng, Label::Outlier)));
        let fast = auc(&samples).unwrap();
        let slow = brute(&samples);
        assert!(
            (fast - slow).abs() < 1e-12,
            "criterion 6 FAILED on set {set}: {fast} vs {slow}"
        );
    }
    pass(
        "criterion 6 (AUC oracle)",
        "rank AUC equals O(n²) pairwise oracle on 200 random tied score sets".into(),
    );
}

#[test]
fn criterion_7_threshold_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let n = 1000usize;
    let errors: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let eta = compute_threshold(&errors, 0.1).unwrap();
    let flagged = errors.iter().filter(|&&e| e > eta).count();
    let frac = flagged as f64 / n as f64;
    assert!(
        (0.08..=0.12).contains(&frac),
        "criterion 7 FAILED: flagged fraction {frac}"
    );
    assert!(
        frac <= 0.1 + 1.0 / n as f64,
        "criterion 7 FAILED: bound violated ({frac})"
    );
    pass(
        "criterion 7 (threshold calibration)",
        format!("flagged {flagged}/1000 = {frac} in [0.08, 0.12], <= 0.1 + 1/N"),
    );
}

fn ring_config(kind: LossKind) -> TrainConfig {
    let mut cfg = TrainConfig::new(LossConfig::new(kind));
    cfg.epochs = 200;
    cfg.hidden_dim = 32;
    cfg.output_dim = 32;
    cfg.batch_size = 64;
    cfg.learning_rate = if kind == LossKind::Lbl { 0.0003 } else { 0.003 };
    cfg.activation = Activation::Tanh;
    cfg.seed = 42;
    cfg
}

#[test]
fn criterion_8_desk_scale_end_to_end() {
    let ds = synth_gaussian_ring(42, 500, 500, 2, 5.0).unwrap();
    let mut split = make_occ_split(
        &ds,
        0,
        &SplitSpec::TrainFraction {
            fraction: 0.5,
            seed: 42,
        },
    )
    .unwrap();
    normalize(&mut split).unwrap();
    for (kind, min_auc, min_gmean) in [
        (LossKind::Lbl, 0.95, Some(0.85)),
        (LossKind::LblSig, 0.95, Some(0.85)),
        (LossKind::MseOcl, 0.90, None),
    ] {
        let start = std::time::Instant::now();
        let model = train(&split, &ring_config(kind)).unwrap();
        let report = evaluate(&model, &split).unwrap();
        let auc_val = report.auc.unwrap();
        let gmean_val = report.gmean.unwrap();
        assert!(
            auc_val >= min_auc,
            "criterion 8 FAILED: {kind:?} AUC {auc_val} < {min_auc}"
        );
        if let Some(g) = min_gmean {
            assert!(
                gmean_val >= g,
                "criterion 8 FAILED: {kind:?} G-mean {gmean_val} < {g}"
            );
        }
        pass(
            "criterion 8 (desk-scale end-to-end)",
            format!(
                "{kind:?}: AUC {auc_val:.4} (>= {min_auc}), G-mean {gmean_val:.4}, {:.1}s",
                start.elapsed().as_secs_f64()
            ),
        );
    }
}

#[test]
fn criterion_9_ecoli_conditional() {
    let path = std::env::var("OCC_ECOLI_CSV")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|_| {
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ecoli.csv")
        });
    if !path.exists() {
        println!(
            "SKIP criterion 9 (ecoli): no CSV at {} (set OCC_ECOLI_CSV to enable)",
            path.display()
        );
        return;
    }
    let ds = occ_core::data::load_csv(&path, occ_core::data::LabelColumn::Last).unwrap();
    let target_class = ds.labels[0]; // first class is the target
    let mut split = make_occ_split(
        &ds,
        target_class,
        &SplitSpec::TrainFraction {
            fraction: 0.5,
            seed: 1,
        },
    )
    .unwrap();
    normalize(&mut split).unwrap();
    let mut base = TrainConfig::new(LossConfig::new(LossKind::Lbl));
    base.epochs = 100;
    base.hidden_dim = 32;
    base.output_dim = 8;
    base.seed = 1;
    let grid = GridSpec {
        learning_rates: vec![0.1, 0.01, 0.003],
        lambdas: vec![1e-3, 1.0, 1e3],
        lambda1s: vec![],
    };
    let result = grid_search(&split, &base, &grid, SelectionMode::TrainLoss, None).unwrap();
    let model = result.best.expect("at least one grid point succeeds");
    let report = evaluate(&model, &split).unwrap();
    let auc_val = report.auc.unwrap();
    assert!(
        auc_val >= 0.85,
        "criterion 9 FAILED: ecoli LBL AUC {auc_val} < 0.85"
    );
    pass("criterion 9 (ecoli)", format!("LBL grid-searched AUC {auc_val:.4} >= 0.85"));
}
