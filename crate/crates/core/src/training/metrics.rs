use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub samples: usize,
    pub accuracy: f64,
    /// `TP_k / (TP_k + FN_k)`; absent when class `k` has no samples.
    pub recall: Vec<Option<f64>>,
    /// Rows are true classes, columns predictions.
    pub confusion_counts: Vec<Vec<usize>>,
    /// Row-normalized confusion; rows of absent classes are zero.
    pub confusion: Vec<Vec<f64>>,
}

/// Accuracy, per-class recall and confusion matrix from label indices in
/// `0..classes`.
pub fn classification_report(truth: &[usize], pred: &[usize], classes: usize) -> Result<ClassificationReport> {
    if truth.len() != pred.len() {
        return Err(Error::shape(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::TooSmall { got: 0, min: 1 });
    }
    let mut counts = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= classes || p >= classes {
            return Err(Error::shape(format!("labels < {classes}"), t.max(p)));
        }
        counts[t][p] += 1;
    }
    let correct: usize = (0..classes).map(|k| counts[k][k]).sum();
    let mut recall = Vec::with_capacity(classes);
    let mut confusion = Vec::with_capacity(classes);
    for (k, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            recall.push(None);
            confusion.push(vec![0.0; classes]);
        } else {
            recall.push(Some(row[k] as f64 / total as f64));
            confusion.push(row.iter().map(|&c| c as f64 / total as f64).collect());
        }
    }
    Ok(ClassificationReport {
        samples: truth.len(),
        accuracy: correct as f64 / truth.len() as f64,
        recall,
        confusion_counts: counts,
        confusion,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterMetric {
    pub name: String,
    /// Absent when the coordinate has zero variance.
    pub r2: Option<f64>,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub samples: usize,
    /// `1 − Σ‖ŝ−s‖² / Σ‖s−s̄‖²`.
    pub r2: Option<f64>,
    /// `√((1/N) Σ‖ŝ−s‖²)`.
    pub rmse: f64,
    pub per_parameter: Vec<ParameterMetric>,
}

/// Aggregate and per-coordinate R² and RMSE in the units of `truth`.
pub fn regression_report(pred: &[Vec<f64>], truth: &[Vec<f64>], names: &[String]) -> Result<RegressionReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape(truth.len(), pred.len()));
    }
    let n = truth.len();
    if n == 0 {
        return Err(Error::TooSmall { got: 0, min: 1 });
    }
    let p = truth[0].len();
    if names.len() != p {
        return Err(Error::shape(format!("{p} parameter names"), names.len()));
    }
    for (a, b) in pred.iter().zip(truth) {
        if a.len() != p || b.len() != p {
            return Err(Error::shape(p, a.len().max(b.len())));
        }
    }
    let mut mean = vec![0.0; p];
    for s in truth {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut sse = vec![0.0; p];
    let mut sst = vec![0.0; p];
    for (a, b) in pred.iter().zip(truth) {
        for j in 0..p {
            sse[j] += (a[j] - b[j]).powi(2);
            sst[j] += (b[j] - mean[j]).powi(2);
        }
    }
    let r2 = |e: f64, t: f64| (t > 0.0).then(|| 1.0 - e / t);
    let total_sse: f64 = sse.iter().sum();
    let total_sst: f64 = sst.iter().sum();
    Ok(RegressionReport {
        samples: n,
        r2: r2(total_sse, total_sst),
        rmse: (total_sse / n as f64).sqrt(),
        per_parameter: (0..p)
            .map(|j| ParameterMetric {
                name: names[j].clone(),
                r2: r2(sse[j], sst[j]),
                rmse: (sse[j] / n as f64).sqrt(),
            })
            .collect(),
    })
}

/// Per-sample `√(‖ŝ−s‖²/P)`, the quantity binned in error histograms.
pub fn sample_rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let p = truth.len().max(1) as f64;
    (pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over `[min, max]` of the values.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !lo.is_finite() || !hi.is_finite() {
        return Histogram {
            edges: vec![0.0; bins + 1],
            counts: vec![0; bins],
        };
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram {
        edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_constant_classifiers() {
        let truth = [0, 1, 2, 0, 1, 2];
        let r = classification_report(&truth, &truth, 3).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.recall.iter().all(|&x| x == Some(1.0)));
        for (k, row) in r.confusion.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if j == k { 1.0 } else { 0.0 });
            }
        }
        let r = classification_report(&truth, &[1; 6], 3).unwrap();
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_class_recall_is_absent() {
        let r = classification_report(&[0, 0, 1], &[0, 1, 1], 3).unwrap();
        assert_eq!(r.recall[2], None);
        assert_eq!(r.recall[0], Some(0.5));
    }

    #[test]
    fn regression_oracles() {
        let truth = vec![vec![1.0, 2.0], vec![3.0, 5.0], vec![2.0, -1.0]];
        let names = vec!["a".to_string(), "b".to_string()];
        let r = regression_report(&truth, &truth, &names).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.r2, Some(1.0));
        let mean = vec![vec![2.0, 2.0]; 3];
        let r = regression_report(&mean, &truth, &names).unwrap();
        assert!(r.r2.unwrap().abs() < 1e-12);
        let constant = vec![vec![1.0, 2.0]; 3];
        let r = regression_report(&truth, &constant, &names).unwrap();
        assert_eq!(r.r2, None);
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let h = histogram(&v, 7);
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
        assert_eq!(h.edges.len(), 8);
        assert_eq!(histogram(&[2.0, 2.0], 3).counts.iter().sum::<usize>(), 2);
    }
}
