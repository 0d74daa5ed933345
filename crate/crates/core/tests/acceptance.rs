//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! lines always reach the test log. Set `ACCEPTANCE_SKIP_TRAINING=1` to skip
//! the two long training runs (criteria 6 to 8).

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use circscatter::dataio::{write_dataset, Task};
use circscatter::nn::{
    attention_forward, circular_conv_forward, conv_output_len, write_network, AttentionParams, LayerShape, LayerSpec,
    Network, NetworkSpec, OutputActivation, Parameters, Preset, Tensor,
};
use circscatter::pipeline::{run_experiment, ExperimentConfig, ExperimentOutcome, Suite, TrainOverrides};
use circscatter::training::{
    classification_report, evaluate_loss, fit, gradcheck_suite, regression_report, NoiseLevelReport, Targets,
    TrainConfig, TrainData,
};

struct Line {
    id: usize,
    passed: bool,
    detail: String,
}

fn report(lines: &mut Vec<Line>, id: usize, passed: bool, detail: String) {
    println!("criterion {id:>2}: {} | {detail}", if passed { "PASS" } else { "FAIL" });
    lines.push(Line { id, passed, detail });
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn gradients() -> (bool, String) {
    let t = Instant::now();
    let reports = gradcheck_suite(1, 1e-4).expect("gradient check runs");
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let elapsed = t.elapsed();
    let ok = reports.iter().all(|r| r.passed) && elapsed < Duration::from_secs(120);
    (
        ok,
        format!(
            "{} networks, max_rel_err {worst:.2e} < 1e-4, {}",
            reports.len(),
            secs(elapsed)
        ),
    )
}

fn random_array2(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn random_array1(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0))
}

fn equivariance() -> (bool, String) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut conv_err, mut attn_err) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let t0 = rng.random_range(2..=64);
        let (k1, k2, kmix) = (
            rng.random_range(1..=15),
            rng.random_range(1..=15),
            rng.random_range(1..=7),
        );
        let spec = NetworkSpec::new(
            "equivariance",
            (t0, 3),
            vec![
                LayerSpec::conv(4, k1, 1),
                LayerSpec::conv(4, k2, 1),
                LayerSpec::Attention {
                    kernel_mix: kmix,
                    reduction: 2,
                },
                LayerSpec::bottleneck(2),
                LayerSpec::Flatten,
                LayerSpec::Output {
                    units: 1,
                    activation: OutputActivation::Linear,
                },
            ],
            Task::Regression,
        );
        let net = Network::<f64>::new(spec, case).expect("network");
        let x = Tensor::from_array(random_array2(&mut rng, (t0, 3)));
        let shift = rng.random_range(1..=t0) as isize;
        let a = net.pre_flatten(&x.roll(shift)).expect("forward");
        let b = net.pre_flatten(&x).expect("forward").roll(shift);
        conv_err = conv_err.max((a.array() - b.array()).iter().fold(0.0, |m, v| m.max(v.abs())));

        let c = 2 * rng.random_range(1..=4);
        let h = Tensor::from_array(random_array2(&mut rng, (t0, c)));
        let (w_mix, b_mix) = (random_array2(&mut rng, (c, kmix * c)), random_array1(&mut rng, c));
        let (gain, shift_p) = (random_array1(&mut rng, c), random_array1(&mut rng, c));
        let (w1, b1) = (random_array2(&mut rng, (c / 2, c)), random_array1(&mut rng, c / 2));
        let (w2, b2) = (random_array2(&mut rng, (c, c / 2)), random_array1(&mut rng, c));
        let p = AttentionParams {
            w_mix: w_mix.view(),
            b_mix: b_mix.view(),
            gain: gain.view(),
            shift: shift_p.view(),
            w1: w1.view(),
            b1: b1.view(),
            w2: w2.view(),
            b2: b2.view(),
        };
        let (_, wa) = attention_forward(&h, &p, kmix, 2).expect("attention");
        let (_, wb) = attention_forward(&h.roll(shift), &p, kmix, 2).expect("attention");
        attn_err = attn_err.max(wa.iter().zip(&wb).fold(0.0, |m, (a, b)| m.max((a - b).abs())));
    }
    let elapsed = t.elapsed();
    let ok = conv_err < 1e-10 && attn_err < 1e-6 && elapsed < Duration::from_secs(60);
    (
        ok,
        format!(
            "100 configs, conv stack {conv_err:.1e} < 1e-10, attention weights {attn_err:.1e} < 1e-6, {}",
            secs(elapsed)
        ),
    )
}

fn seq(t: usize, c: usize) -> LayerShape {
    LayerShape::Seq(t, c)
}

fn flat(d: usize) -> LayerShape {
    LayerShape::Flat(d)
}

// Parameter counts of individual layers, written out independently of the
// network code.
fn conv_p(nf: usize, k: usize, c: usize) -> usize {
    nf * k * c + nf
}

fn dense_ln_p(i: usize, o: usize) -> usize {
    i * o + o + 2 * o
}

fn out_p(i: usize, o: usize) -> usize {
    i * o + o
}

fn attention_p(c: usize, kmix: usize, r: usize) -> usize {
    c * kmix * c + c + 2 * c + (c / r) * c + c / r + c * (c / r) + c
}

fn presets() -> (bool, String) {
    let expected: [(Preset, Vec<LayerShape>, usize); 5] = [
        (
            Preset::Ap1,
            vec![
                seq(32, 2),
                seq(32, 64),
                seq(16, 64),
                seq(16, 64),
                seq(16, 16),
                flat(256),
                flat(128),
                flat(64),
                flat(3),
            ],
            conv_p(64, 5, 2)
                + conv_p(64, 5, 64)
                + conv_p(64, 7, 64)
                + conv_p(16, 1, 64)
                + dense_ln_p(256, 128)
                + dense_ln_p(128, 64)
                + out_p(64, 3),
        ),
        (
            Preset::Ap2,
            vec![
                seq(32, 2),
                seq(32, 64),
                seq(16, 64),
                seq(16, 16),
                flat(256),
                flat(64),
                flat(5),
            ],
            conv_p(64, 5, 2) + conv_p(64, 5, 64) + conv_p(16, 1, 64) + dense_ln_p(256, 64) + out_p(64, 5),
        ),
        (
            Preset::Ap4,
            vec![
                seq(32, 2),
                seq(32, 64),
                seq(16, 64),
                seq(16, 16),
                flat(256),
                flat(64),
                flat(6),
            ],
            conv_p(64, 5, 2) + conv_p(64, 5, 64) + conv_p(16, 1, 64) + dense_ln_p(256, 64) + out_p(64, 6),
        ),
        (
            Preset::Ap7,
            vec![
                seq(128, 4),
                seq(128, 128),
                seq(64, 128),
                seq(64, 128),
                seq(64, 128),
                seq(64, 64),
                flat(4096),
                flat(256),
                flat(128),
                flat(13),
            ],
            conv_p(128, 5, 4)
                + conv_p(128, 5, 128)
                + conv_p(128, 15, 128)
                + conv_p(128, 31, 128)
                + conv_p(64, 1, 128)
                + dense_ln_p(4096, 256)
                + dense_ln_p(256, 128)
                + out_p(128, 13),
        ),
        (
            Preset::Ap10,
            vec![
                seq(128, 8),
                seq(128, 128),
                seq(64, 128),
                seq(64, 128),
                seq(64, 128),
                seq(64, 128),
                seq(64, 64),
                flat(4096),
                flat(512),
                flat(256),
                flat(128),
                flat(14),
            ],
            conv_p(128, 5, 8)
                + conv_p(128, 5, 128)
                + conv_p(128, 15, 128)
                + conv_p(128, 31, 128)
                + attention_p(128, 3, 8)
                + conv_p(64, 1, 128)
                + dense_ln_p(4096, 512)
                + dense_ln_p(512, 256)
                + dense_ln_p(256, 128)
                + out_p(128, 14),
        ),
    ];
    let mut bad = Vec::new();
    for (preset, shapes, params) in &expected {
        let spec = preset.spec();
        let got = spec.resolve().expect("preset resolves");
        if &got != shapes || spec.param_count() != *params || preset.param_count() != *params {
            bad.push(format!("{preset}: shapes {got:?}, params {}", spec.param_count()));
        }
    }
    let counts: Vec<String> = expected.iter().map(|(p, _, n)| format!("{p}={n}")).collect();
    if bad.is_empty() {
        (
            true,
            format!("all inter-layer shapes match; params {}", counts.join(", ")),
        )
    } else {
        (false, bad.join("; "))
    }
}

fn length_law() -> (bool, String) {
    let mut checked = 0;
    let mut bad = Vec::new();
    for t in 1..=256usize {
        let x = Tensor::from_array(Array2::from_shape_fn((t, 1), |(i, _)| i as f64));
        for k in 1..=31usize {
            let w = Array3::<f64>::ones((1, k, 1));
            let b = Array1::<f64>::zeros(1);
            for s in [1usize, 2, 4] {
                let expected = t.div_ceil(s);
                let y = circular_conv_forward(&x, w.view(), b.view(), s).expect("conv");
                if conv_output_len(t, s) != expected || y.shape().0 != expected {
                    bad.push((t, k, s));
                }
                checked += 1;
            }
        }
    }
    (
        bad.is_empty(),
        format!("{checked} (T, K, S) triples, {} mismatches", bad.len()),
    )
}

fn conv_oracle() -> (bool, String) {
    let x = Tensor::from_array(Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let w = Array3::from_shape_vec((1, 3, 1), vec![1.0, 0.0, -1.0]).unwrap();
    let y = circular_conv_forward(&x, w.view(), Array1::zeros(1).view(), 1).expect("conv");
    let got: Vec<f64> = y.array().column(0).to_vec();
    (
        got == [2.0, -2.0, -2.0, 2.0],
        format!("X=[1,2,3,4], W=[1,0,-1] gives {got:?}"),
    )
}

fn desk_config(lr: Option<f64>) -> ExperimentConfig {
    ExperimentConfig {
        scale: 1.0,
        seed: 7,
        overrides: TrainOverrides {
            epochs: Some(300),
            learning_rate: lr,
            ..Default::default()
        },
        trials: 5,
        ..Default::default()
    }
}

/// Learning rate used for the desk-scale classifier. At the preset's 1e-5
/// the surrogate task does not converge within 300 epochs.
const DESK_CLASSIFIER_LR: f64 = 1e-3;

fn classification_run() -> (ExperimentOutcome<f32>, Duration) {
    let t = Instant::now();
    let config = ExperimentConfig {
        scale: 0.1,
        ..desk_config(Some(DESK_CLASSIFIER_LR))
    };
    let out = run_experiment::<f32>(Suite::Classification, &config).expect("classification experiment");
    (out, t.elapsed())
}

fn peanut_run() -> (ExperimentOutcome<f32>, Duration) {
    let t = Instant::now();
    let config = ExperimentConfig {
        scale: 10_000.0 / 30_000.0,
        ..desk_config(None)
    };
    let out = run_experiment::<f32>(Suite::Peanut, &config).expect("peanut experiment");
    (out, t.elapsed())
}

fn monotone(levels: &[NoiseLevelReport], tol: f64) -> (bool, String) {
    let scores: Vec<String> = levels.iter().map(|l| format!("{}:{:.4}", l.level, l.score)).collect();
    let ok = levels.windows(2).all(|w| w[1].score <= w[0].score + tol);
    (ok, scores.join(" "))
}

fn metric_oracles() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let names: Vec<String> = (0..4).map(|i| format!("p{i}")).collect();
    let truth: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..4).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64).collect())
        .collect();
    let mean: Vec<f64> = (0..4)
        .map(|j| truth.iter().map(|r| r[j]).sum::<f64>() / truth.len() as f64)
        .collect();
    let mean_pred = vec![mean; truth.len()];
    let r_mean = regression_report(&mean_pred, &truth, &names).unwrap();
    let r_perfect = regression_report(&truth, &truth, &names).unwrap();
    let mut worst = 0.0f64;
    worst = worst.max(r_mean.r2.unwrap().abs());
    for p in &r_mean.per_parameter {
        worst = worst.max(p.r2.unwrap().abs());
    }
    worst = worst.max((r_perfect.r2.unwrap() - 1.0).abs()).max(r_perfect.rmse);

    let labels: Vec<usize> = (0..500).map(|_| rng.random_range(0..3)).collect();
    let pred: Vec<usize> = labels
        .iter()
        .map(|&l| {
            if rng.random_bool(0.7) {
                l
            } else {
                rng.random_range(0..3)
            }
        })
        .collect();
    let c = classification_report(&labels, &pred, 3).unwrap();
    for row in &c.confusion {
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    let weighted: f64 = (0..3)
        .map(|k| labels.iter().filter(|&&l| l == k).count() as f64 / labels.len() as f64 * c.recall[k].unwrap())
        .sum();
    worst = worst.max((weighted - c.accuracy).abs());
    (worst <= 1e-12, format!("largest deviation {worst:.1e} <= 1e-12"))
}

fn determinism() -> (bool, String) {
    let dir = tempfile::tempdir().expect("temp dir");
    let run = |tag: &str| {
        let config = ExperimentConfig {
            scale: 0.01,
            seed: 21,
            overrides: TrainOverrides {
                epochs: Some(3),
                ..Default::default()
            },
            trials: 1,
            noise_levels: vec![0.0],
            ..Default::default()
        };
        let data = circscatter::dataio::generate_dataset(
            &Suite::Peanut.generation_spec(config.scale, config.seed, None).unwrap(),
        )
        .expect("generation");
        let path = dir.path().join(format!("{tag}.csc"));
        write_dataset(&path, &data).expect("write");
        let out = circscatter::pipeline::run_experiment_on::<f32>(Suite::Peanut, &data, &config).expect("experiment");
        (
            std::fs::read(path).unwrap(),
            out.history,
            write_network(&out.model.network).unwrap(),
        )
    };
    let (d1, h1, m1) = run("a");
    let (d2, h2, m2) = run("b");
    let history_same = h1.to_csv() == h2.to_csv()
        && h1
            .epochs
            .iter()
            .zip(&h2.epochs)
            .all(|(a, b)| a.valid_loss.to_bits() == b.valid_loss.to_bits());
    let ok = d1 == d2 && history_same && m1 == m2;
    (
        ok,
        format!(
            "dataset {} B, model {} B, {} epochs; dataset/history/model identical: {}/{}/{}",
            d1.len(),
            m1.len(),
            h1.epochs.len(),
            d1 == d2,
            history_same,
            m1 == m2
        ),
    )
}

fn early_stopping() -> (bool, String) {
    // One-weight linear model, inputs ±1 with zero mean. Training targets are
    // 2x and validation targets x, so validation loss is (w − 1)² and rises
    // once w passes 1 on its way to 2.
    let spec = NetworkSpec::new(
        "line",
        (1, 1),
        vec![
            LayerSpec::Flatten,
            LayerSpec::Output {
                units: 1,
                activation: OutputActivation::Linear,
            },
        ],
        Task::Regression,
    );
    let xs: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x = Array3::from_shape_vec((8, 1, 1), xs.clone()).unwrap();
    let data = |scale: f64| TrainData {
        x: x.clone(),
        y: Targets::Values(Array2::from_shape_vec((8, 1), xs.iter().map(|v| scale * v).collect()).unwrap()),
    };
    let (train, valid) = (data(2.0), data(1.0));
    let config = |epochs| TrainConfig {
        learning_rate: 0.05,
        clip: None,
        batch_size: 8,
        max_epochs: epochs,
        min_delta: 0.0,
        patience: 8,
        seed: 3,
        task: Task::Regression,
    };
    let fresh = || Network::<f64>::with_params(spec.clone(), Parameters::zeros(&spec).unwrap()).unwrap();

    let mut net = fresh();
    let history = fit(&mut net, &train, &valid, &config(200)).expect("fit");
    let k = history.best_epoch;
    let losses: Vec<f64> = history.epochs.iter().map(|e| e.valid_loss).collect();
    let worsening = losses[k - 1..].windows(2).all(|w| w[1] > w[0]);

    let mut rerun = fresh();
    fit(&mut rerun, &train, &valid, &config(k)).expect("fit");
    let same_weights = rerun.params() == net.params();
    let (returned, _) = evaluate_loss(&net, &valid).expect("loss");
    let exact = returned.to_bits() == history.min_valid_loss().to_bits();
    let ok = history.stopped_early && worsening && same_weights && exact && k > 1;
    (
        ok,
        format!(
            "best epoch {k} of {}, strictly worse afterwards: {worsening}, weights equal epoch-{k} rerun: {same_weights}, min history loss equals returned model's loss bitwise: {exact}",
            history.epochs.len()
        ),
    )
}

fn main() {
    // Single worker thread for the determinism criterion.
    std::env::set_var(circscatter::THREADS_ENV, "1");
    let skip_training = std::env::var("ACCEPTANCE_SKIP_TRAINING").is_ok_and(|v| v == "1");
    let mut lines = Vec::new();

    let (ok, d) = gradients();
    report(&mut lines, 1, ok, d);
    let (ok, d) = equivariance();
    report(&mut lines, 2, ok, d);
    let (ok, d) = presets();
    report(&mut lines, 3, ok, d);
    let (ok, d) = length_law();
    report(&mut lines, 4, ok, d);
    let (ok, d) = conv_oracle();
    report(&mut lines, 5, ok, d);

    if skip_training {
        for id in 6..=8 {
            println!("criterion {id:>2}: SKIP | ACCEPTANCE_SKIP_TRAINING=1");
        }
    } else {
        let (cls, t_cls) = classification_run();
        let c = cls.report.classification.as_ref().expect("classification report");
        let star = c.recall[2].unwrap_or(0.0);
        let ok =
            c.accuracy >= 0.95 && star >= 0.98 && cls.report.epochs_run <= 300 && t_cls <= Duration::from_secs(45 * 60);
        report(
            &mut lines,
            6,
            ok,
            format!(
                "N={} Ap1 lr {DESK_CLASSIFIER_LR}: test accuracy {:.4} >= 0.95, star recall {star:.4} >= 0.98, {} epochs, {}",
                cls.report.samples,
                c.accuracy,
                cls.report.epochs_run,
                secs(t_cls)
            ),
        );

        let (pea, t_pea) = peanut_run();
        let r2 = pea.report.regression.as_ref().and_then(|r| r.r2).unwrap_or(f64::NAN);
        let ok = r2 >= 0.90 && t_pea <= Duration::from_secs(45 * 60);
        report(
            &mut lines,
            7,
            ok,
            format!(
                "N={} Ap2: test R² {r2:.4} >= 0.90, {} epochs, {}",
                pea.report.samples,
                pea.report.epochs_run,
                secs(t_pea)
            ),
        );

        let (ok_c, d_c) = monotone(&cls.report.noise, 0.005);
        let (ok_r, d_r) = monotone(&pea.report.noise, 0.005);
        report(
            &mut lines,
            8,
            ok_c && ok_r,
            format!("accuracy {d_c}; R² {d_r}; tolerance 0.005, 5 draws"),
        );
    }

    let (ok, d) = metric_oracles();
    report(&mut lines, 9, ok, d);
    let (ok, d) = determinism();
    report(&mut lines, 10, ok, d);
    let (ok, d) = early_stopping();
    report(&mut lines, 11, ok, d);

    let failed: Vec<String> = lines
        .iter()
        .filter(|l| !l.passed)
        .map(|l| format!("{} ({})", l.id, l.detail))
        .collect();
    if failed.is_empty() {
        println!("acceptance: {} criteria passed", lines.len());
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
