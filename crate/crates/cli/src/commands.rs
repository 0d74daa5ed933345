use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use circscatter::dataio::{generate_dataset, read_dataset, split_dataset, write_dataset, Dataset, Task};
use circscatter::nn::Preset;
use circscatter::pipeline::{
    histogram_csv, run_experiment, run_experiment_on, select_reconstructions, ExperimentConfig, ExperimentOutcome,
    EXPERIMENT_NOISE_LEVELS, STAR_FIXED_IMPEDANCE,
};
use circscatter::training::{
    evaluate_classification, evaluate_regression, gradcheck_suite, noise_sweep, train, ClassificationReport, Model,
    NoiseLevelReport, RegressionReport, TrainConfig, DEFAULT_NOISE_LEVELS,
};
use circscatter::{Error, Result, Scalar};
use serde::Serialize;

use crate::config::{Precision, RunConfig};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const MODEL_STEM: &str = "model";

/// Failure of a check that ran to completion.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

/// Creates the output directory and archives the resolved configuration.
fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_json(&out.join("run_config.json"), cfg)?;
    Ok(out)
}

/// `(directory, stem)` of a model given as a directory or a `.model` file.
fn model_location(path: &Path) -> (PathBuf, String) {
    if path.extension().is_some_and(|e| e == "model") {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        (dir, stem)
    } else {
        (path.to_path_buf(), MODEL_STEM.to_string())
    }
}

fn load_model<T: Scalar>(cfg: &RunConfig) -> Result<Model<T>> {
    let (dir, stem) = model_location(cfg.require_model()?);
    Model::load(dir, &stem)
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let data = read_dataset(cfg.require_data()?)?;
    data.validate()?;
    Ok(data)
}

macro_rules! with_precision {
    ($cfg:expr, $f:ident($($arg:expr),*)) => {
        match $cfg.precision() {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

pub fn generate(cfg: &RunConfig) -> CmdResult {
    let suite = cfg.require_suite()?;
    let spec = suite.generation_spec(cfg.scale.unwrap_or(1.0), cfg.seed(), cfg.fixed_lambda)?;
    let out = prepare_out(cfg)?;
    let data = generate_dataset(&spec)?;
    let path = out.join(format!("{}.csc", suite.name()));
    write_dataset(&path, &data)?;
    #[derive(Serialize)]
    struct Manifest<'a> {
        suite: &'a str,
        file: String,
        samples: usize,
        angles: usize,
        channels: usize,
        target_dim: usize,
        generation: &'a circscatter::dataio::GenerationSpec,
    }
    write_json(
        &out.join("dataset.json"),
        &Manifest {
            suite: suite.name(),
            file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            samples: data.len(),
            angles: data.angles,
            channels: data.channels,
            target_dim: data.target_dim,
            generation: &spec,
        },
    )?;
    println!(
        "wrote {} samples (T0={}, C0={}) to {}",
        data.len(),
        data.angles,
        data.channels,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    network: String,
    preset: Option<Preset>,
    parameters: usize,
    samples: usize,
    train: usize,
    valid: usize,
    test: usize,
    train_config: TrainConfig,
    epochs_run: usize,
    best_epoch: usize,
    best_valid_loss: f64,
    stopped_early: bool,
    classification: Option<ClassificationReport>,
    regression: Option<RegressionReport>,
}

fn train_with<T: Scalar>(cfg: &RunConfig) -> CmdResult {
    let data = load_data(cfg)?;
    let (spec, preset) = cfg.network()?;
    if spec.task != data.task {
        return Err(Error::LayoutMismatch(format!(
            "network '{}' is a {:?} network but the dataset is a {:?} dataset",
            spec.name, spec.task, data.task
        ))
        .into());
    }
    circscatter::training::check_compatible(&spec, &data)?;
    let base = preset.unwrap_or(match spec.task {
        Task::Classification => Preset::Ap1,
        Task::Regression => Preset::Ap2,
    });
    let mut train_config = TrainConfig::from_preset(base, cfg.seed());
    cfg.overrides().apply(&mut train_config);
    train_config.validate()?;
    let out = prepare_out(cfg)?;
    let split = split_dataset(data.len(), cfg.seed())?;
    let (model, history) = train::<T>(&spec, &data, &split, &train_config)?;
    let test = data.subset(&split.test);
    let (classification, regression) = match data.task {
        Task::Classification => (Some(evaluate_classification(&model, &test)?), None),
        Task::Regression => (None, Some(evaluate_regression(&model, &test)?.0)),
    };
    model.save(&out, MODEL_STEM)?;
    write_text(&out.join("history.csv"), &history.to_csv())?;
    write_json(&out.join("split.json"), &split)?;
    let report = TrainReport {
        network: spec.name.clone(),
        preset,
        parameters: model.network.param_count(),
        samples: data.len(),
        train: split.train.len(),
        valid: split.valid.len(),
        test: split.test.len(),
        train_config,
        epochs_run: history.epochs.len(),
        best_epoch: history.best_epoch,
        best_valid_loss: history.best_valid_loss,
        stopped_early: history.stopped_early,
        classification,
        regression,
    };
    write_json(&out.join("report.json"), &report)?;
    match (&report.classification, &report.regression) {
        (Some(c), _) => println!("test accuracy {:.4} after {} epochs", c.accuracy, report.epochs_run),
        (_, Some(r)) => println!(
            "test R² {} RMSE {:.6} after {} epochs",
            r.r2.map_or("n/a".into(), |v| format!("{v:.4}")),
            r.rmse,
            report.epochs_run
        ),
        _ => {}
    }
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> CmdResult {
    with_precision!(cfg, train_with(cfg))
}

fn confusion_csv(r: &ClassificationReport, classes: &[circscatter::geometry::ShapeClass]) -> String {
    let mut s = String::from("truth");
    for c in classes {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for (i, row) in r.confusion.iter().enumerate() {
        let _ = write!(s, "{}", classes[i]);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn parameters_csv(r: &RegressionReport) -> String {
    let mut s = String::from("parameter,r2,rmse\n");
    for p in &r.per_parameter {
        let r2 = p.r2.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(s, "{},{r2},{}", p.name, p.rmse);
    }
    s
}

fn evaluate_with<T: Scalar>(cfg: &RunConfig) -> CmdResult {
    let model = load_model::<T>(cfg)?;
    let data = load_data(cfg)?;
    model.check_dataset(&data)?;
    let out = prepare_out(cfg)?;
    match data.task {
        Task::Classification => {
            let r = evaluate_classification(&model, &data)?;
            write_json(&out.join("metrics.json"), &r)?;
            write_text(&out.join("confusion.csv"), &confusion_csv(&r, &data.classes))?;
            println!("accuracy {:.4} on {} samples", r.accuracy, r.samples);
        }
        Task::Regression => {
            let (r, _) = evaluate_regression(&model, &data)?;
            write_json(&out.join("metrics.json"), &r)?;
            write_text(&out.join("parameters.csv"), &parameters_csv(&r))?;
            println!(
                "R² {} RMSE {:.6} on {} samples",
                r.r2.map_or("n/a".into(), |v| format!("{v:.4}")),
                r.rmse,
                r.samples
            );
        }
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> CmdResult {
    with_precision!(cfg, evaluate_with(cfg))
}

fn sweep_table(levels: &[NoiseLevelReport], task: Task) -> String {
    let mut s = match task {
        Task::Classification => String::from("noise,trials,accuracy,star_recall\n"),
        Task::Regression => String::from("noise,trials,r2,rmse\n"),
    };
    for l in levels {
        let extra = match task {
            Task::Classification => l.star_recall.map_or(String::new(), |v| v.to_string()),
            Task::Regression => l.rmse.map_or(String::new(), |v| v.to_string()),
        };
        let _ = writeln!(s, "{},{},{},{extra}", l.level, l.trials, l.score);
    }
    s
}

fn sweep_with<T: Scalar>(cfg: &RunConfig) -> CmdResult {
    let model = load_model::<T>(cfg)?;
    let data = load_data(cfg)?;
    model.check_dataset(&data)?;
    let levels = cfg
        .noise_levels
        .clone()
        .unwrap_or_else(|| DEFAULT_NOISE_LEVELS.to_vec());
    let out = prepare_out(cfg)?;
    let reports = noise_sweep(&model, &data, &levels, cfg.seed(), cfg.trials.unwrap_or(5))?;
    let table = sweep_table(&reports, data.task);
    write_json(&out.join("sweep.json"), &reports)?;
    write_text(&out.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> CmdResult {
    with_precision!(cfg, sweep_with(cfg))
}

fn reconstruct_with<T: Scalar>(cfg: &RunConfig) -> CmdResult {
    let model = load_model::<T>(cfg)?;
    let data = load_data(cfg)?;
    model.check_dataset(&data)?;
    if data.task != Task::Regression {
        return Err(Error::InvalidConfig("reconstruct needs a regression model and dataset".into()).into());
    }
    let out = prepare_out(cfg)?;
    let (_, pred) = evaluate_regression(&model, &data)?;
    let (summary, curves) = select_reconstructions(
        &data,
        &pred,
        Some(cfg.fixed_lambda.unwrap_or(STAR_FIXED_IMPEDANCE)),
        cfg.seed(),
        128,
    )?;
    for (label, curve) in &curves {
        curve.write_csv(out.join(format!("curves_{label}.csv")))?;
        if let Some(d) = &curve.diagnostic {
            log::warn!("{label} reconstruction: {d}");
        }
    }
    write_text(&out.join("histogram.csv"), &histogram_csv(&summary.histogram))?;
    write_json(&out.join("reconstruction.json"), &summary)?;
    println!(
        "max error {:.6} ({}), min error {:.6} ({}), random {:.6} ({})",
        summary.max.rmse,
        summary.max.shape_id,
        summary.min.rmse,
        summary.min.shape_id,
        summary.random.rmse,
        summary.random.shape_id
    );
    Ok(())
}

pub fn reconstruct(cfg: &RunConfig) -> CmdResult {
    with_precision!(cfg, reconstruct_with(cfg))
}

pub fn gradcheck(cfg: &RunConfig) -> CmdResult {
    let reports = gradcheck_suite(cfg.seed(), GRADCHECK_TOLERANCE)?;
    let mut worst = 0.0f64;
    for r in &reports {
        println!(
            "{:<18} {:>6} params  max_rel_err {:.3e}  ({})",
            r.name, r.parameters, r.max_rel_err, r.worst
        );
        worst = worst.max(r.max_rel_err);
    }
    if cfg.out.is_some() {
        let out = prepare_out(cfg)?;
        write_json(&out.join("gradcheck.json"), &reports)?;
    }
    if reports.iter().all(|r| r.passed) {
        println!("max_rel_err < 1e-4: PASS");
        Ok(())
    } else {
        println!("max_rel_err < 1e-4: FAIL (worst {worst:.3e})");
        Err(Failure::Check(format!(
            "gradient check failed with max relative error {worst:.3e}"
        )))
    }
}

fn experiment_with<T: Scalar>(cfg: &RunConfig) -> CmdResult {
    let suite = cfg.require_suite()?;
    let out = prepare_out(cfg)?;
    let config = ExperimentConfig {
        scale: cfg.scale.unwrap_or(1.0),
        seed: cfg.seed(),
        overrides: cfg.overrides(),
        noise_levels: cfg
            .noise_levels
            .clone()
            .unwrap_or_else(|| EXPERIMENT_NOISE_LEVELS.to_vec()),
        trials: cfg.trials.unwrap_or(5),
        fixed_impedance: cfg.fixed_lambda,
        out_dir: Some(out),
        ..Default::default()
    };
    let outcome: ExperimentOutcome<T> = match &cfg.data {
        Some(path) => {
            let data = read_dataset(path)?;
            run_experiment_on(suite, &data, &config)?
        }
        None => run_experiment(suite, &config)?,
    };
    let r = &outcome.report;
    println!(
        "{} ({}): {} samples, {} epochs, best epoch {}",
        r.suite, r.preset, r.samples, r.epochs_run, r.best_epoch
    );
    print!("{}", sweep_table(&r.noise, suite.task()));
    Ok(())
}

pub fn experiment(cfg: &RunConfig) -> CmdResult {
    with_precision!(cfg, experiment_with(cfg))
}
