use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability floor applied before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

fn check_dims<T>(a: &ArrayView2<'_, T>, b: (usize, usize)) -> Result<()> {
    if a.dim() != b {
        return Err(Error::shape(format!("{b:?}"), format!("{:?}", a.dim())));
    }
    Ok(())
}

/// `−(1/N) Σ_n Σ_k y_nk log p̂_nk` with `p̂` clipped to `[1e−12, 1]`.
pub fn cross_entropy<T: Scalar>(probs: ArrayView2<'_, T>, targets: ArrayView2<'_, f64>) -> Result<f64> {
    check_dims(&probs, targets.dim())?;
    let n = probs.nrows().max(1) as f64;
    let mut total = 0.0;
    for (p, y) in probs.iter().zip(targets.iter()) {
        if *y != 0.0 {
            total -= y * p.as_f64().clamp(PROB_FLOOR, 1.0).ln();
        }
    }
    Ok(total / n)
}

/// Cross-entropy for integer labels.
pub fn cross_entropy_labels<T: Scalar>(probs: ArrayView2<'_, T>, labels: &[usize]) -> Result<f64> {
    if probs.nrows() != labels.len() {
        return Err(Error::shape(probs.nrows(), labels.len()));
    }
    let n = labels.len().max(1) as f64;
    let mut total = 0.0;
    for (row, &k) in probs.rows().into_iter().zip(labels) {
        if k >= row.len() {
            return Err(Error::shape(format!("label < {}", row.len()), k));
        }
        total -= row[k].as_f64().clamp(PROB_FLOOR, 1.0).ln();
    }
    Ok(total / n)
}

/// `∂L/∂logits = (p̂ − y)/N` for softmax followed by cross-entropy.
pub fn softmax_cross_entropy_grad<T: Scalar>(probs: ArrayView2<'_, T>, labels: &[usize]) -> Array2<T> {
    let inv = T::lit(1.0 / labels.len().max(1) as f64);
    let mut g = probs.to_owned();
    for (mut row, &k) in g.rows_mut().into_iter().zip(labels) {
        row[k] -= T::one();
        row.mapv_inplace(|v| v * inv);
    }
    g
}

/// `(1/N) Σ_n ‖ŝ_n − s_n‖²`.
pub fn mse<T: Scalar>(preds: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> Result<f64> {
    check_dims(&preds, targets.dim())?;
    let n = preds.nrows().max(1) as f64;
    let total: f64 = preds
        .iter()
        .zip(targets.iter())
        .map(|(p, t)| (p.as_f64() - t.as_f64()).powi(2))
        .sum();
    Ok(total / n)
}

/// `∂L/∂ŝ = 2(ŝ − s)/N`.
pub fn mse_grad<T: Scalar>(preds: ArrayView2<'_, T>, targets: ArrayView2<'_, T>) -> Array2<T> {
    let scale = T::lit(2.0 / preds.nrows().max(1) as f64);
    let mut g = &preds - &targets;
    g.mapv_inplace(|v| v * scale);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn cross_entropy_examples() {
        let onehot = arr2(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(cross_entropy(onehot.view(), onehot.view()).unwrap() <= 1e-11);
        let uniform = Array2::from_elem((2, 3), 1.0 / 3.0);
        let l = cross_entropy(uniform.view(), onehot.view()).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!((cross_entropy_labels(uniform.view(), &[0, 2]).unwrap() - l).abs() < 1e-15);
        let zero = arr2(&[[0.0, 1.0, 0.0]]);
        let l = cross_entropy(zero.view(), arr2(&[[1.0, 0.0, 0.0]]).view()).unwrap();
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-9);
        assert!(cross_entropy(uniform.view(), arr2(&[[1.0, 0.0]]).view()).is_err());
    }

    #[test]
    fn mse_examples() {
        let a = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(mse(a.view(), a.view()).unwrap(), 0.0);
        let b = arr2(&[[1.0, 0.0], [3.0, 4.0]]);
        assert_eq!(mse(a.view(), b.view()).unwrap(), 2.0);
        assert_eq!(mse_grad(a.view(), b.view()), arr2(&[[0.0, 2.0], [0.0, 0.0]]));
    }

    #[test]
    fn softmax_grad_sums_to_zero() {
        let p: Array2<f64> = arr2(&[[0.2, 0.5, 0.3], [0.1, 0.1, 0.8]]);
        let g = softmax_cross_entropy_grad(p.view(), &[1, 2]);
        for row in g.rows() {
            assert!(row.sum().abs() < 1e-15);
        }
        assert!((g[(0, 1)] + 0.25).abs() < 1e-15);
    }
}
