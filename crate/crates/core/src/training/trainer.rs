use std::fmt::Write as _;

use ndarray::{s, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy_labels, mse, mse_grad, softmax_cross_entropy_grad};
use super::model::{argmax, features_to_array, Model, ModelMeta};
use super::optim::{clip_gradients, AdamState};
use crate::dataio::{Dataset, DatasetSplit, Standardizer, Task};
use crate::error::{Error, Result};
use crate::geometry::BoundaryShape;
use crate::nn::{Mode, Network, NetworkSpec, Parameters, Preset};
use crate::scalar::Scalar;

/// Upper bound on epochs when none is given.
pub const DEFAULT_MAX_EPOCHS: usize = 1000;

/// Rows per chunk when evaluating a loss over a whole split.
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Global-norm clipping threshold.
    pub clip: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Smallest validation-loss decrease that counts as an improvement.
    pub min_delta: f64,
    pub patience: usize,
    pub seed: u64,
    pub task: Task,
}

impl TrainConfig {
    pub fn from_preset(preset: Preset, seed: u64) -> Self {
        let t = preset.training();
        TrainConfig {
            learning_rate: t.learning_rate,
            clip: t.clip,
            batch_size: t.batch_size,
            max_epochs: DEFAULT_MAX_EPOCHS,
            min_delta: t.min_delta,
            patience: t.patience,
            seed,
            task: preset.task(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch size, patience and max epochs must be at least 1".into());
        }
        if !(self.min_delta >= 0.0) {
            return bad(format!("min_delta {} must be non-negative", self.min_delta));
        }
        if let Some(g) = self.clip {
            if !(g > 0.0) {
                return bad(format!("clip threshold {g} must be positive"));
            }
        }
        Ok(())
    }
}

/// Supervision for one split.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets<T> {
    /// Class indices into the output units.
    Labels(Vec<usize>),
    /// Standardized regression targets, one row per sample.
    Values(Array2<T>),
}

/// Network-ready inputs `(batch, T0, C0)` with their targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData<T> {
    pub x: Array3<T>,
    pub y: Targets<T>,
}

impl<T: Scalar> TrainData<T> {
    pub fn len(&self) -> usize {
        self.x.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> TrainData<T> {
        TrainData {
            x: self.x.select(Axis(0), idx),
            y: match &self.y {
                Targets::Labels(l) => Targets::Labels(idx.iter().map(|&i| l[i]).collect()),
                Targets::Values(v) => Targets::Values(v.select(Axis(0), idx)),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub train_accuracy: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let with_acc = self.epochs.first().is_some_and(|e| e.valid_accuracy.is_some());
        let mut out = String::from("epoch,train_loss,valid_loss");
        if with_acc {
            out.push_str(",train_accuracy,valid_accuracy");
        }
        out.push('\n');
        for e in &self.epochs {
            let _ = write!(out, "{},{:.10e},{:.10e}", e.epoch, e.train_loss, e.valid_loss);
            if with_acc {
                let _ = write!(
                    out,
                    ",{:.6},{:.6}",
                    e.train_accuracy.unwrap_or(f64::NAN),
                    e.valid_accuracy.unwrap_or(f64::NAN)
                );
            }
            out.push('\n');
        }
        out
    }

    pub fn min_valid_loss(&self) -> f64 {
        self.epochs.iter().map(|e| e.valid_loss).fold(f64::INFINITY, f64::min)
    }
}

/// Loss (with L2 penalty) and, for classification, accuracy of `net` over a
/// full split in evaluation mode.
pub fn evaluate_loss<T: Scalar>(net: &Network<T>, data: &TrainData<T>) -> Result<(f64, Option<f64>)> {
    let n = data.len();
    if n == 0 {
        return Err(Error::TooSmall { got: 0, min: 1 });
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let out = net.predict_batch(data.x.slice(s![start..end, .., ..]))?;
        let (loss, hits) = batch_loss(&out, &data.y, start..end)?;
        total += loss * (end - start) as f64;
        correct += hits;
        start = end;
    }
    let acc = matches!(data.y, Targets::Labels(_)).then(|| correct as f64 / n as f64);
    Ok((total / n as f64 + net.l2_penalty(), acc))
}

fn batch_loss<T: Scalar>(out: &Array2<T>, y: &Targets<T>, rows: std::ops::Range<usize>) -> Result<(f64, usize)> {
    match y {
        Targets::Labels(l) => {
            let labels = &l[rows];
            let hits = out
                .rows()
                .into_iter()
                .zip(labels)
                .filter(|(r, &k)| argmax(&r.iter().map(|v| v.as_f64()).collect::<Vec<_>>()) == k)
                .count();
            Ok((cross_entropy_labels(out.view(), labels)?, hits))
        }
        Targets::Values(v) => Ok((mse(out.view(), v.slice(s![rows, ..]))?, 0)),
    }
}

/// Mini-batch Adam training with early stopping on validation loss.
///
/// The best-so-far weights are snapshotted whenever the validation loss
/// reaches a new minimum. The patience counter resets only when the loss
/// drops more than `min_delta` below the last reference value; training
/// stops once it reaches `patience`. On return `net` holds the snapshot.
pub fn fit<T: Scalar>(
    net: &mut Network<T>,
    train: &TrainData<T>,
    valid: &TrainData<T>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::TooSmall {
            got: train.len().min(valid.len()),
            min: 1,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(net.params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Parameters<T>)> = None;
    let mut reference = f64::INFINITY;
    let mut wait = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = train.select(idx);
            let cache = net.forward_train(batch.x.view(), Mode::Train(&mut rng))?;
            let (loss, d_logits, hits) = match &batch.y {
                Targets::Labels(l) => {
                    let (loss, hits) = batch_loss(&cache.output, &batch.y, 0..idx.len())?;
                    (loss, softmax_cross_entropy_grad(cache.output.view(), l), hits)
                }
                Targets::Values(v) => (
                    mse(cache.output.view(), v.view())?,
                    mse_grad(cache.output.view(), v.view()),
                    0,
                ),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            let mut grads = net.backward(&cache, d_logits.view())?;
            if let Some(gamma) = config.clip {
                clip_gradients(&mut grads, gamma);
            }
            if !grads.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b + 1,
                    loss: f64::NAN,
                });
            }
            adam.step(net.params_mut(), &grads, config.learning_rate)?;
            loss_sum += loss * idx.len() as f64;
            correct += hits;
        }
        let train_loss = loss_sum / train.len() as f64 + net.l2_penalty();
        let (valid_loss, valid_accuracy) = evaluate_loss(net, valid)?;
        if !valid_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                loss: valid_loss,
            });
        }
        let train_accuracy = valid_accuracy.map(|_| correct as f64 / train.len() as f64);
        log::debug!("epoch {epoch}: train {train_loss:.6e} valid {valid_loss:.6e}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            train_accuracy,
            valid_accuracy,
        });

        if best.as_ref().is_none_or(|(_, l, _)| valid_loss < *l) {
            best = Some((epoch, valid_loss, net.params().clone()));
        }
        if valid_loss < reference - config.min_delta {
            reference = valid_loss;
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                stopped_early = epoch < config.max_epochs;
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    let (best_epoch, best_valid_loss, params) = best.expect("at least one epoch ran");
    net.set_params(params)?;
    Ok(TrainHistory {
        epochs: history,
        best_epoch,
        best_valid_loss,
        stopped_early,
    })
}

/// Class-index or standardized-target supervision for a dataset subset.
fn targets_for<T: Scalar>(data: &Dataset, idx: &[usize], scaler: Option<&Standardizer>) -> Result<Targets<T>> {
    match data.task {
        Task::Classification => idx
            .iter()
            .map(|&i| {
                let label = data.samples[i]
                    .label()
                    .ok_or_else(|| Error::InvalidConfig("missing label".into()))?;
                data.classes
                    .iter()
                    .position(|&c| c == label)
                    .ok_or_else(|| Error::InvalidConfig(format!("label {label:?} outside the class set")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Targets::Labels),
        Task::Regression => {
            let scaler = scaler.expect("regression needs a target scaler");
            let mut y = Array2::zeros((idx.len(), data.target_dim));
            for (r, &i) in idx.iter().enumerate() {
                let p = data.samples[i]
                    .params()
                    .ok_or_else(|| Error::InvalidConfig("missing targets".into()))?;
                for (j, v) in scaler.apply(p).into_iter().enumerate() {
                    y[(r, j)] = T::lit(v);
                }
            }
            Ok(Targets::Values(y))
        }
    }
}

/// Standardized inputs and targets of one split for a fitted model.
pub fn prepare_split<T: Scalar>(meta: &ModelMeta, data: &Dataset, idx: &[usize]) -> Result<TrainData<T>> {
    let rows: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| meta.features.apply(&data.samples[i].features))
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    Ok(TrainData {
        x: features_to_array(&refs, data.angles, data.channels)?,
        y: targets_for(data, idx, meta.targets.as_ref())?,
    })
}

/// Checks that `spec` can be trained on `data`.
pub fn check_compatible(spec: &NetworkSpec, data: &Dataset) -> Result<()> {
    spec.resolve()?;
    if spec.input != (data.angles, data.channels) {
        return Err(Error::LayoutMismatch(format!(
            "network '{}' expects T0={} C0={}, dataset has T0={} C0={}",
            spec.name, spec.input.0, spec.input.1, data.angles, data.channels
        )));
    }
    if spec.task != data.task {
        return Err(Error::LayoutMismatch(format!(
            "{:?} network given a {:?} dataset",
            spec.task, data.task
        )));
    }
    let outputs = match data.task {
        Task::Classification => data.classes.len(),
        Task::Regression => data.target_dim,
    };
    if spec.output_dim() != outputs {
        return Err(Error::LayoutMismatch(format!(
            "network '{}' has {} outputs, dataset needs {outputs}",
            spec.name,
            spec.output_dim()
        )));
    }
    Ok(())
}

/// Fits scalers on the training split, trains a freshly initialized network,
/// and returns the restored best model with its history.
pub fn train<T: Scalar>(
    spec: &NetworkSpec,
    data: &Dataset,
    split: &DatasetSplit,
    config: &TrainConfig,
) -> Result<(Model<T>, TrainHistory)> {
    config.validate()?;
    data.validate()?;
    check_compatible(spec, data)?;
    if config.task != data.task {
        return Err(Error::InvalidConfig(format!(
            "{:?} training config for a {:?} dataset",
            config.task, data.task
        )));
    }
    let features = Standardizer::fit(split.train.iter().map(|&i| data.samples[i].features.as_slice()))?;
    let (targets, target_names) = match data.task {
        Task::Classification => (None, Vec::new()),
        Task::Regression => {
            let s = Standardizer::fit(split.train.iter().map(|&i| data.samples[i].params().unwrap_or(&[])))?;
            let class = data.classes[0];
            let with_impedance = data.target_dim == class.coeff_count() + 3;
            (Some(s), BoundaryShape::target_names(class, with_impedance))
        }
    };
    let meta = ModelMeta {
        task: data.task,
        classes: data.classes.clone(),
        target_names,
        features,
        targets,
    };
    let train_set = prepare_split(&meta, data, &split.train)?;
    let valid_set = prepare_split(&meta, data, &split.valid)?;
    let mut network = Network::new(spec.clone(), config.seed)?;
    log::info!(
        "training '{}' ({} parameters) on {} samples, validating on {}",
        spec.name,
        network.param_count(),
        train_set.len(),
        valid_set.len()
    );
    let history = fit(&mut network, &train_set, &valid_set, config)?;
    Ok((Model { network, meta }, history))
}
