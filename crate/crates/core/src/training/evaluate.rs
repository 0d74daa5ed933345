use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{classification_report, regression_report, ClassificationReport, RegressionReport};
use super::model::{argmax, Model};
use crate::dataio::{Dataset, Task};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Noise levels of the robustness tables.
pub const DEFAULT_NOISE_LEVELS: [f64; 4] = [0.005, 0.01, 0.02, 0.05];

fn rows(data: &Dataset) -> Vec<&[f64]> {
    data.samples.iter().map(|s| s.features.as_slice()).collect()
}

fn label_indices(data: &Dataset) -> Result<Vec<usize>> {
    data.samples
        .iter()
        .map(|s| {
            s.label()
                .and_then(|c| data.classes.iter().position(|&k| k == c))
                .ok_or_else(|| Error::InvalidConfig("sample label outside the dataset class set".into()))
        })
        .collect()
}

fn class_report(model_classes: usize, truth: &[usize], probs: &[Vec<f64>]) -> Result<ClassificationReport> {
    let pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    classification_report(truth, &pred, model_classes)
}

fn reg_report<T: Scalar>(model: &Model<T>, data: &Dataset, pred: &[Vec<f64>]) -> Result<RegressionReport> {
    let truth: Vec<Vec<f64>> = data
        .samples
        .iter()
        .map(|s| {
            s.params()
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::InvalidConfig("missing targets".into()))
        })
        .collect::<Result<_>>()?;
    regression_report(pred, &truth, &model.meta.target_names)
}

fn check_classes<T: Scalar>(model: &Model<T>, data: &Dataset) -> Result<()> {
    if model.meta.classes != data.classes {
        return Err(Error::LayoutMismatch(format!(
            "model classes {:?} differ from dataset classes {:?}",
            model.meta.classes, data.classes
        )));
    }
    Ok(())
}

/// Argmax predictions scored against the dataset labels.
pub fn evaluate_classification<T: Scalar>(model: &Model<T>, data: &Dataset) -> Result<ClassificationReport> {
    model.check_dataset(data)?;
    check_classes(model, data)?;
    let probs = model.predict(&rows(data))?;
    class_report(data.classes.len(), &label_indices(data)?, &probs)
}

/// Predictions are mapped back to original target units before scoring.
pub fn evaluate_regression<T: Scalar>(model: &Model<T>, data: &Dataset) -> Result<(RegressionReport, Vec<Vec<f64>>)> {
    model.check_dataset(data)?;
    let pred = model.predict(&rows(data))?;
    Ok((reg_report(model, data, &pred)?, pred))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevelReport {
    pub level: f64,
    pub trials: usize,
    /// Mean accuracy (classification) or mean aggregate R² (regression).
    pub score: f64,
    /// Mean star-class recall, when the data contains stars.
    pub star_recall: Option<f64>,
    /// Mean RMSE in original units (regression only).
    pub rmse: Option<f64>,
    pub classification: Vec<ClassificationReport>,
    pub regression: Vec<RegressionReport>,
}

/// Evaluates under `x + η ε` perturbations of the standardized test
/// features, averaging `trials` draws per level. `η = 0` is evaluated once.
pub fn noise_sweep<T: Scalar>(
    model: &Model<T>,
    data: &Dataset,
    levels: &[f64],
    seed: u64,
    trials: usize,
) -> Result<Vec<NoiseLevelReport>> {
    model.check_dataset(data)?;
    if model.task() == Task::Classification {
        check_classes(model, data)?;
    }
    let trials = trials.max(1);
    let inputs = rows(data);
    let labels = if model.task() == Task::Classification {
        label_indices(data)?
    } else {
        Vec::new()
    };
    let star = data
        .classes
        .iter()
        .position(|c| *c == crate::geometry::ShapeClass::Star);
    let mut out = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let runs = if level == 0.0 { 1 } else { trials };
        let mut classification = Vec::new();
        let mut regression = Vec::new();
        for trial in 0..runs {
            let pred = if level == 0.0 {
                model.predict(&inputs)?
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((li * 1000 + trial) as u64);
                model.predict_noisy(&inputs, level, &mut rng)?
            };
            match model.task() {
                Task::Classification => classification.push(class_report(data.classes.len(), &labels, &pred)?),
                Task::Regression => regression.push(reg_report(model, data, &pred)?),
            }
        }
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let (score, star_recall, rmse) = match model.task() {
            Task::Classification => {
                let acc = mean(classification.iter().map(|r| r.accuracy).collect());
                let star = star.and_then(|k| {
                    let v: Option<Vec<f64>> = classification.iter().map(|r| r.recall[k]).collect();
                    v.map(mean)
                });
                (acc, star, None)
            }
            Task::Regression => {
                let r2 = mean(regression.iter().map(|r| r.r2.unwrap_or(f64::NAN)).collect());
                (r2, None, Some(mean(regression.iter().map(|r| r.rmse).collect())))
            }
        };
        out.push(NoiseLevelReport {
            level,
            trials: runs,
            score,
            star_recall,
            rmse,
            classification,
            regression,
        });
    }
    Ok(out)
}
