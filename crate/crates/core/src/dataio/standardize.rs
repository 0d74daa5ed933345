use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest standard deviation used when scaling a column.
pub const STD_FLOOR: f64 = 1e-12;

/// Per-column affine scaling to zero mean and unit (population) variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits column statistics. Needs at least two rows of equal length.
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
        I::IntoIter: Clone,
    {
        let rows = rows.into_iter();
        let mut it = rows.clone();
        let first = it.next().ok_or(Error::TooSmall { got: 0, min: 2 })?;
        let dim = first.len();
        let mut sum = vec![0.0; dim];
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        let mut n = 0usize;
        for row in rows.clone() {
            if row.len() != dim {
                return Err(Error::shape(dim, row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                sum[j] += v;
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
            n += 1;
        }
        if n < 2 {
            return Err(Error::TooSmall { got: n, min: 2 });
        }
        let inv = 1.0 / n as f64;
        // Constant columns get their exact value as mean so they scale to 0.
        let mut mean: Vec<f64> = sum
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(s, (l, h))| if l == h { *l } else { s * inv })
            .collect();
        let mut corr = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                let d = v - mean[j];
                corr[j] += d;
                sq[j] += d * d;
            }
        }
        let mut std = vec![0.0; dim];
        for j in 0..dim {
            let c = corr[j] * inv;
            if lo[j] != hi[j] {
                mean[j] += c;
            }
            std[j] = (sq[j] * inv - c * c).max(0.0).sqrt().max(STD_FLOOR);
        }
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::shape(format!("{} standardized columns", self.dim()), len));
        }
        Ok(())
    }
}
