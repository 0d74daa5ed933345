use std::fs;
use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{add_noise_in_place, Dataset, Standardizer, Task};
use crate::error::{Error, Result};
use crate::geometry::ShapeClass;
use crate::nn::{load_network, save_network, Network};
use crate::scalar::Scalar;

/// Rows per inference chunk.
const PREDICT_CHUNK: usize = 512;

/// Everything needed to turn raw measurements into predictions, apart from
/// the network weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub task: Task,
    /// Label set (classification) or the regressed obstacle class.
    pub classes: Vec<ShapeClass>,
    /// Regression target names, empty for classification.
    pub target_names: Vec<String>,
    pub features: Standardizer,
    pub targets: Option<Standardizer>,
}

/// A trained network with its input and target scalers.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    pub network: Network<T>,
    pub meta: ModelMeta,
}

/// Standardized, channel-major features reshaped to `(batch, T0, C0)`.
pub fn features_to_array<T: Scalar>(rows: &[&[f64]], t0: usize, c0: usize) -> Result<Array3<T>> {
    let mut x = Array3::zeros((rows.len(), t0, c0));
    for (b, row) in rows.iter().enumerate() {
        if row.len() != t0 * c0 {
            return Err(Error::shape(t0 * c0, row.len()));
        }
        let mut sample = x.index_axis_mut(Axis(0), b);
        for c in 0..c0 {
            for i in 0..t0 {
                sample[(i, c)] = T::lit(row[c * t0 + i]);
            }
        }
    }
    Ok(x)
}

impl<T: Scalar> Model<T> {
    pub fn task(&self) -> Task {
        self.meta.task
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.network.input_shape()
    }

    /// Checks that the dataset has this model's layout and targets.
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        let (t0, c0) = self.input_shape();
        if (data.angles, data.channels) != (t0, c0) {
            return Err(Error::LayoutMismatch(format!(
                "model '{}' expects T0={t0} C0={c0}, dataset has T0={} C0={}",
                self.network.spec().name,
                data.angles,
                data.channels
            )));
        }
        if data.task != self.meta.task {
            return Err(Error::LayoutMismatch(format!(
                "{:?} model given a {:?} dataset",
                self.meta.task, data.task
            )));
        }
        if data.task == Task::Regression && data.target_dim != self.network.output_dim() {
            return Err(Error::LayoutMismatch(format!(
                "model predicts {} parameters, dataset has {}",
                self.network.output_dim(),
                data.target_dim
            )));
        }
        Ok(())
    }

    /// Standardized inputs, optionally perturbed by `η·N(0, 1)` noise.
    pub fn prepare(&self, rows: &[&[f64]], noise: Option<(f64, &mut dyn rand::RngCore)>) -> Result<Array3<T>> {
        let (t0, c0) = self.input_shape();
        self.meta.features.check_dim(t0 * c0)?;
        let mut scaled: Vec<Vec<f64>> = rows.iter().map(|r| self.meta.features.apply(r)).collect();
        if let Some((level, rng)) = noise {
            for r in &mut scaled {
                add_noise_in_place(r, level, rng)?;
            }
        }
        let refs: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
        features_to_array(&refs, t0, c0)
    }

    /// Raw network outputs (probabilities or standardized targets) for
    /// prepared inputs.
    pub fn predict_prepared(&self, x: ArrayView3<'_, T>) -> Result<Array2<T>> {
        let n = x.len_of(Axis(0));
        let mut out = Array2::zeros((n, self.network.output_dim()));
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_CHUNK).min(n);
            let y = self.network.predict_batch(x.slice(s![start..end, .., ..]))?;
            out.slice_mut(s![start..end, ..]).assign(&y);
            start = end;
        }
        Ok(out)
    }

    /// Converts network outputs to user units: probabilities unchanged,
    /// regression outputs un-standardized.
    pub fn finish(&self, y: &Array2<T>) -> Vec<Vec<f64>> {
        y.rows()
            .into_iter()
            .map(|r| {
                let v: Vec<f64> = r.iter().map(|x| x.as_f64()).collect();
                match &self.meta.targets {
                    Some(s) => s.invert(&v),
                    None => v,
                }
            })
            .collect()
    }

    /// Class probabilities or parameter estimates for raw measurement rows.
    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let x = self.prepare(rows, None)?;
        Ok(self.finish(&self.predict_prepared(x.view())?))
    }

    pub fn predict_noisy<R: Rng>(&self, rows: &[&[f64]], level: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let x = self.prepare(rows, Some((level, rng)))?;
        Ok(self.finish(&self.predict_prepared(x.view())?))
    }

    /// Writes `<stem>.model` and `<stem>.scaler.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        save_network(&self.network, dir.join(format!("{stem}.model")))?;
        let path = dir.join(format!("{stem}.scaler.json"));
        fs::write(&path, serde_json::to_string_pretty(&self.meta)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let network = load_network(dir.join(format!("{stem}.model")))?;
        let path = dir.join(format!("{stem}.scaler.json"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: ModelMeta = serde_json::from_str(&text)?;
        let model = Model { network, meta };
        let (t0, c0) = model.input_shape();
        model.meta.features.check_dim(t0 * c0)?;
        Ok(model)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
