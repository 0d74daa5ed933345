use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint train/validation/test index sets covering `0..N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded 80/10/10 split. Validation and test sizes are `round(N/10)`; the
/// training set takes the remainder.
pub fn split_dataset(n: usize, seed: u64) -> Result<DatasetSplit> {
    if n < 10 {
        return Err(Error::TooSmall { got: n, min: 10 });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tenth = (n as f64 / 10.0).round() as usize;
    let n_train = n - 2 * tenth;
    let test = idx.split_off(n_train + tenth);
    let valid = idx.split_off(n_train);
    Ok(DatasetSplit {
        train: idx,
        valid,
        test,
        seed,
    })
}

/// `x + η·ε` with `ε ~ N(0, 1)` drawn per entry. Meant for standardized
/// features, where `η` acts as a relative noise level.
pub fn add_noise<R: Rng + ?Sized>(features: &[f64], level: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut out = features.to_vec();
    add_noise_in_place(&mut out, level, rng)?;
    Ok(out)
}

pub fn add_noise_in_place<R: Rng + ?Sized>(features: &mut [f64], level: f64, rng: &mut R) -> Result<()> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::InvalidNoiseLevel(level));
    }
    if level == 0.0 {
        return Ok(());
    }
    for v in features {
        let eps: f64 = rng.sample(StandardNormal);
        *v += level * eps;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let s = split_dataset(90000, 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (72000, 9000, 9000));
        let s = split_dataset(10, 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
        assert!(split_dataset(9, 1).is_err());
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_deterministic() {
        let a = split_dataset(1234, 99).unwrap();
        assert_eq!(a, split_dataset(1234, 99).unwrap());
        assert_ne!(a, split_dataset(1234, 100).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.valid).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1234).collect::<Vec<_>>());
    }

    #[test]
    fn zero_noise_is_identity() {
        let x = vec![1.0, -2.0, 3.5];
        let y = add_noise(&x, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(x, y);
        assert!(add_noise(&x, -0.1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        for level in [0.005, 0.01, 0.02, 0.05] {
            assert!(add_noise(&x, level, &mut ChaCha8Rng::seed_from_u64(0)).is_ok());
        }
    }

    #[test]
    fn noise_has_requested_std() {
        let n = 1_000_000;
        let x = vec![0.0; n];
        let y = add_noise(&x, 0.05, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((std - 0.05).abs() / 0.05 < 0.02, "empirical std {std}");
    }
}
