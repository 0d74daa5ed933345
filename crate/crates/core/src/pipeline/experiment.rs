use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::curves::{reconstruct_curve, Curve};
use crate::dataio::{generate_dataset, split_dataset, Dataset, DatasetSplit, GenerationSpec, Task};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryShape, ImpedanceMode, ScatterConfig, ShapeClass};
use crate::nn::Preset;
use crate::scalar::Scalar;
use crate::training::{
    evaluate_classification, evaluate_regression, histogram, noise_sweep, sample_rmse, train, ClassificationReport,
    Histogram, Model, NoiseLevelReport, RegressionReport, TrainConfig, TrainHistory,
};

/// Impedance of the fixed-impedance star suite.
pub const STAR_FIXED_IMPEDANCE: f64 = 2.0;
/// Levels evaluated by an experiment, clean data first.
pub const EXPERIMENT_NOISE_LEVELS: [f64; 5] = [0.0, 0.005, 0.01, 0.02, 0.05];
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Classification,
    Peanut,
    Kite,
    StarFixed,
    StarVariable,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Classification,
        Suite::Peanut,
        Suite::Kite,
        Suite::StarFixed,
        Suite::StarVariable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Classification => "classification",
            Suite::Peanut => "peanut",
            Suite::Kite => "kite",
            Suite::StarFixed => "star_fixed",
            Suite::StarVariable => "star_variable",
        }
    }

    /// Input layout `(T0, C0)`.
    pub fn layout(self) -> (usize, usize) {
        match self {
            Suite::Classification | Suite::Peanut | Suite::Kite => (32, 2),
            Suite::StarFixed => (128, 4),
            Suite::StarVariable => (128, 8),
        }
    }

    /// Dataset size at scale 1.
    pub fn full_size(self) -> usize {
        match self {
            Suite::Classification => 90_000,
            Suite::Peanut | Suite::Kite => 30_000,
            Suite::StarFixed => 80_000,
            Suite::StarVariable => 120_000,
        }
    }

    pub fn preset(self) -> Preset {
        match self {
            Suite::Classification => Preset::Ap1,
            Suite::Peanut => Preset::Ap2,
            Suite::Kite => Preset::Ap4,
            Suite::StarFixed => Preset::Ap7,
            Suite::StarVariable => Preset::Ap10,
        }
    }

    pub fn task(self) -> Task {
        self.preset().task()
    }

    pub fn classes(self) -> Vec<ShapeClass> {
        match self {
            Suite::Classification => ShapeClass::ALL.to_vec(),
            Suite::Peanut => vec![ShapeClass::Peanut],
            Suite::Kite => vec![ShapeClass::Kite],
            Suite::StarFixed | Suite::StarVariable => vec![ShapeClass::Star],
        }
    }

    /// `fixed` replaces the default `λ = 2` of the fixed-impedance suite and
    /// is ignored elsewhere.
    pub fn impedance(self, fixed: Option<f64>) -> ImpedanceMode {
        match self {
            Suite::StarFixed => ImpedanceMode::Fixed(fixed.unwrap_or(STAR_FIXED_IMPEDANCE)),
            _ => ImpedanceMode::Variable,
        }
    }

    /// `round(scale · N)` for `scale ∈ (0, 1]`.
    pub fn scaled_size(self, scale: f64) -> Result<usize> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::InvalidConfig(format!("scale {scale} must lie in (0, 1]")));
        }
        let n = (scale * self.full_size() as f64).round() as usize;
        if n < 10 {
            return Err(Error::TooSmall { got: n, min: 10 });
        }
        Ok(n)
    }

    pub fn generation_spec(self, scale: f64, seed: u64, fixed_impedance: Option<f64>) -> Result<GenerationSpec> {
        let (t0, c0) = self.layout();
        Ok(GenerationSpec {
            classes: self.classes(),
            count: self.scaled_size(scale)?,
            config: ScatterConfig::standard(t0, c0)?,
            seed,
            impedance: self.impedance(fixed_impedance),
            task: self.task(),
        })
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown suite '{s}' (expected classification, peanut, kite, star_fixed or star_variable)"
                ))
            })
    }
}

/// Optional replacements for preset training settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub min_delta: Option<f64>,
    pub clip: Option<f64>,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.min_delta {
            cfg.min_delta = v;
        }
        if let Some(v) = self.clip {
            cfg.clip = Some(v);
        }
    }

    /// Fields set in `other` win.
    pub fn merged(&self, other: &TrainOverrides) -> TrainOverrides {
        TrainOverrides {
            epochs: other.epochs.or(self.epochs),
            learning_rate: other.learning_rate.or(self.learning_rate),
            batch_size: other.batch_size.or(self.batch_size),
            patience: other.patience.or(self.patience),
            min_delta: other.min_delta.or(self.min_delta),
            clip: other.clip.or(self.clip),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scale: f64,
    /// Seeds generation, splitting, initialization, shuffling, noise draws
    /// and the random reconstruction sample.
    pub seed: u64,
    pub overrides: TrainOverrides,
    pub noise_levels: Vec<f64>,
    pub trials: usize,
    pub fixed_impedance: Option<f64>,
    pub curve_points: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scale: 1.0,
            seed: 0,
            overrides: TrainOverrides::default(),
            noise_levels: EXPERIMENT_NOISE_LEVELS.to_vec(),
            trials: 5,
            fixed_impedance: None,
            curve_points: 128,
            out_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub shape_id: String,
    pub rmse: f64,
    pub discrepancy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionSummary {
    pub max: SampleError,
    pub min: SampleError,
    pub random: SampleError,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub suite: Suite,
    pub preset: Preset,
    pub samples: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub train_config: TrainConfig,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stopped_early: bool,
    pub classification: Option<ClassificationReport>,
    pub regression: Option<RegressionReport>,
    pub noise: Vec<NoiseLevelReport>,
    pub reconstruction: Option<ReconstructionSummary>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome<T: Scalar> {
    pub report: ExperimentReport,
    pub model: Model<T>,
    pub history: TrainHistory,
    pub split: DatasetSplit,
    /// Max-error, min-error and random test reconstructions, in that order.
    pub curves: Vec<(String, Curve)>,
}

/// Max-error, min-error and a seeded random test sample, each as a
/// truth-vs-prediction curve, plus the per-sample RMSE summary.
pub fn select_reconstructions(
    test: &Dataset,
    pred: &[Vec<f64>],
    fixed_impedance: Option<f64>,
    seed: u64,
    points: usize,
) -> Result<(ReconstructionSummary, Vec<(String, Curve)>)> {
    if test.task != Task::Regression || test.is_empty() || pred.len() != test.len() {
        return Err(Error::InvalidConfig(
            "reconstructions need a non-empty regression test set".into(),
        ));
    }
    let class = test.classes[0];
    let fixed = (test.target_dim == class.coeff_count() + 2).then(|| fixed_impedance.unwrap_or(STAR_FIXED_IMPEDANCE));
    let truth: Vec<&[f64]> = test.samples.iter().map(|s| s.params().unwrap_or(&[])).collect();
    let errors: Vec<f64> = pred.iter().zip(&truth).map(|(p, t)| sample_rmse(p, t)).collect();
    let order = |better: fn(f64, f64) -> bool| {
        (1..errors.len()).fold(0, |best, i| if better(errors[i], errors[best]) { i } else { best })
    };
    let imax = order(|a, b| a > b);
    let imin = order(|a, b| a < b);
    let all: Vec<usize> = (0..errors.len()).collect();
    let irand = *all
        .choose(&mut ChaCha8Rng::seed_from_u64(seed))
        .expect("non-empty test set");

    let mut curves = Vec::new();
    let mut pick = |label: &str, i: usize| -> Result<SampleError> {
        let t = BoundaryShape::from_targets(class, truth[i], fixed)?;
        let p = BoundaryShape::from_targets(class, &pred[i], fixed)?;
        let curve = reconstruct_curve(&p, Some(&t), points)?;
        let e = SampleError {
            shape_id: test.samples[i].shape_id.clone(),
            rmse: errors[i],
            discrepancy: curve.discrepancy,
        };
        curves.push((label.to_string(), curve));
        Ok(e)
    };
    let max = pick("max", imax)?;
    let min = pick("min", imin)?;
    let random = pick("random", irand)?;
    Ok((
        ReconstructionSummary {
            max,
            min,
            random,
            histogram: histogram(&errors, HISTOGRAM_BINS),
        },
        curves,
    ))
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut s = String::from("lower,upper,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(s, "{},{},{c}", h.edges[i], h.edges[i + 1]);
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Generates the suite's dataset and runs it through [`run_experiment_on`].
pub fn run_experiment<T: Scalar>(suite: Suite, config: &ExperimentConfig) -> Result<ExperimentOutcome<T>> {
    let spec = suite.generation_spec(config.scale, config.seed, config.fixed_impedance)?;
    log::info!("generating {} {} samples", spec.count, suite);
    let data = generate_dataset(&spec)?;
    run_experiment_on(suite, &data, config)
}

/// Splits, trains the suite preset, evaluates clean and noisy test data,
/// and for regression suites selects reconstruction curves. Writes the
/// bundle when `out_dir` is set.
pub fn run_experiment_on<T: Scalar>(
    suite: Suite,
    data: &Dataset,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome<T>> {
    let preset = suite.preset();
    if data.classes != suite.classes() || data.task != suite.task() {
        return Err(Error::LayoutMismatch(format!("dataset does not hold {suite} samples")));
    }
    let split = split_dataset(data.len(), config.seed)?;
    let mut train_config = TrainConfig::from_preset(preset, config.seed);
    config.overrides.apply(&mut train_config);
    let (model, history) = train::<T>(&preset.spec(), data, &split, &train_config)?;
    let test = data.subset(&split.test);

    let (classification, regression, reconstruction, curves) = match suite.task() {
        Task::Classification => (Some(evaluate_classification(&model, &test)?), None, None, Vec::new()),
        Task::Regression => {
            let (report, pred) = evaluate_regression(&model, &test)?;
            let (summary, curves) =
                select_reconstructions(&test, &pred, config.fixed_impedance, config.seed, config.curve_points)?;
            (None, Some(report), Some(summary), curves)
        }
    };
    let noise = noise_sweep(&model, &test, &config.noise_levels, config.seed, config.trials)?;
    let report = ExperimentReport {
        suite,
        preset,
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
        noise,
        reconstruction,
    };
    let outcome = ExperimentOutcome {
        report,
        model,
        history,
        split,
        curves,
    };
    if let Some(dir) = &config.out_dir {
        write_outcome(&outcome, config, dir)?;
    }
    Ok(outcome)
}

/// `model.*`, `history.csv`, `report.json`, `config.json`, and for
/// regression `histogram.csv` and `curves_{max,min,random}.csv`.
pub fn write_outcome<T: Scalar>(outcome: &ExperimentOutcome<T>, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outcome.model.save(dir, "model")?;
    write(&dir.join("history.csv"), &outcome.history.to_csv())?;
    write(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(&outcome.report)?,
    )?;
    write(&dir.join("config.json"), &serde_json::to_string_pretty(config)?)?;
    if let Some(r) = &outcome.report.reconstruction {
        write(&dir.join("histogram.csv"), &histogram_csv(&r.histogram))?;
    }
    for (label, curve) in &outcome.curves {
        curve.write_csv(dir.join(format!("curves_{label}.csv")))?;
    }
    Ok(())
}
