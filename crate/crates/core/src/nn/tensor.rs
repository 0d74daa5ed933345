use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense angular × channel array: row `i` is angular position `i`, column
/// `c` is channel `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar>(Array2<T>);

impl<T: Scalar> Tensor<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        let len = values.len();
        Array2::from_shape_vec((rows, cols), values)
            .map(Tensor)
            .map_err(|_| Error::shape(format!("{rows}x{cols} = {} values", rows * cols), len))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor(Array2::zeros((rows, cols)))
    }

    pub fn from_array(a: Array2<T>) -> Self {
        Tensor(a.as_standard_layout().into_owned())
    }

    /// Builds `X[i, c] = features[c·rows + i]`.
    pub fn from_channel_major(features: &[f64], rows: usize, cols: usize) -> Result<Self> {
        if features.len() != rows * cols {
            return Err(Error::shape(
                format!("{rows}·{cols} = {} features", rows * cols),
                features.len(),
            ));
        }
        Ok(Tensor(Array2::from_shape_fn((rows, cols), |(i, c)| {
            T::lit(features[c * rows + i])
        })))
    }

    pub fn to_channel_major(&self) -> Vec<f64> {
        let (rows, cols) = self.shape();
        let mut out = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            out.extend((0..rows).map(|i| self.0[(i, c)].as_f64()));
        }
        out
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.0[(row, col)]
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.0.view()
    }

    pub fn array(&self) -> &Array2<T> {
        &self.0
    }

    pub fn into_array(self) -> Array2<T> {
        self.0
    }

    /// Row-major values.
    pub fn values(&self) -> &[T] {
        self.0.as_slice().expect("tensor storage is contiguous")
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Cyclic shift along the angular axis: `out[i] = self[(i - s) mod T]`.
    pub fn roll(&self, shift: isize) -> Self {
        let (rows, cols) = self.shape();
        Tensor(Array2::from_shape_fn((rows, cols), |(i, c)| {
            self.0[((i as isize - shift).rem_euclid(rows as isize) as usize, c)]
        }))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor(self.0.mapv(|v| U::lit(v.as_f64())))
    }
}
