use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{boundary_discrepancy, boundary_grid, eval_curve, BoundaryShape};

pub const CURVE_HEADER: &str = "tau,x_true,y_true,x_pred,y_pred";

/// Predicted boundary polyline, optionally paired with the true boundary at
/// the same parameters. Missing truth is stored as NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub tau: Vec<f64>,
    pub truth: Vec<[f64; 2]>,
    pub pred: Vec<[f64; 2]>,
    pub discrepancy: Option<f64>,
    /// Set when the predicted parametrization degenerates somewhere.
    pub diagnostic: Option<String>,
}

/// Evaluates the predicted (and true) parametrization on a `points`-grid.
/// Degenerate predictions are still emitted, with a diagnostic.
pub fn reconstruct_curve(pred: &BoundaryShape, truth: Option<&BoundaryShape>, points: usize) -> Result<Curve> {
    let tau = boundary_grid(points)?;
    let diagnostic = tau
        .iter()
        .find_map(|&t| eval_curve(pred, t).err())
        .map(|e| e.to_string());
    let pred_pts = tau.iter().map(|&t| pred.point_unchecked(t)).collect();
    let truth_pts = match truth {
        Some(s) => tau.iter().map(|&t| s.point_unchecked(t)).collect(),
        None => vec![[f64::NAN; 2]; points],
    };
    let discrepancy = truth.map(|s| boundary_discrepancy(pred, s, points)).transpose()?;
    Ok(Curve {
        tau,
        truth: truth_pts,
        pred: pred_pts,
        discrepancy,
        diagnostic,
    })
}

/// Matched-parameter RMS distance minimized over cyclic shifts of the
/// parameter grid, for comparing curves from different parametrizations.
pub fn aligned_discrepancy(a: &BoundaryShape, b: &BoundaryShape, points: usize) -> Result<f64> {
    let tau = boundary_grid(points)?;
    let pa: Vec<[f64; 2]> = tau.iter().map(|&t| a.point_unchecked(t)).collect();
    let pb: Vec<[f64; 2]> = tau.iter().map(|&t| b.point_unchecked(t)).collect();
    let best = (0..points)
        .map(|s| {
            (0..points)
                .map(|k| {
                    let (p, q) = (pa[k], pb[(k + s) % points]);
                    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok((best / points as f64).sqrt())
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CURVE_HEADER);
        s.push('\n');
        for ((t, a), b) in self.tau.iter().zip(&self.truth).zip(&self.pred) {
            let _ = writeln!(s, "{t},{},{},{},{}", a[0], a[1], b[0], b[1]);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses a curve file. Discrepancy and diagnostic are not stored in the
    /// file; the discrepancy is recomputed from the points when truth is
    /// present.
    pub fn from_csv(text: &str) -> Result<Curve> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CURVE_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header '{CURVE_HEADER}'"),
                })
            }
        }
        let (mut tau, mut truth, mut pred) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            if v.len() != 5 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected 5 fields, got {}", v.len()),
                });
            }
            tau.push(v[0]);
            truth.push([v[1], v[2]]);
            pred.push([v[3], v[4]]);
        }
        let discrepancy =
            (!truth.is_empty() && truth.iter().all(|p| p[0].is_finite() && p[1].is_finite())).then(|| {
                let sum: f64 = truth
                    .iter()
                    .zip(&pred)
                    .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
                    .sum();
                (sum / truth.len() as f64).sqrt()
            });
        Ok(Curve {
            tau,
            truth,
            pred,
            discrepancy,
            diagnostic: None,
        })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Curve> {
        let path = path.as_ref();
        Curve::from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeClass;

    fn kite() -> BoundaryShape {
        BoundaryShape::new(ShapeClass::Kite, vec![0.3, 0.1, 0.35], [0.05, -0.02], 1.0).unwrap()
    }

    #[test]
    fn truth_against_itself_is_zero() {
        let c = reconstruct_curve(&kite(), Some(&kite()), 64).unwrap();
        assert_eq!(c.discrepancy, Some(0.0));
        assert!(c.diagnostic.is_none());
    }

    #[test]
    fn translation_gives_offset() {
        let mut moved = kite();
        moved.center[0] += 0.01;
        let d = reconstruct_curve(&moved, Some(&kite()), 64)
            .unwrap()
            .discrepancy
            .unwrap();
        assert!((d - 0.01).abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut moved = kite();
        moved.coeffs[1] = 0.123_456_789_012_345;
        let c = reconstruct_curve(&moved, Some(&kite()), 50).unwrap();
        let back = Curve::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back.tau, c.tau);
        assert_eq!(back.truth, c.truth);
        assert_eq!(back.pred, c.pred);
        let no_truth = reconstruct_curve(&moved, None, 8).unwrap();
        let back = Curve::from_csv(&no_truth.to_csv()).unwrap();
        assert_eq!(back.pred, no_truth.pred);
        assert!(back.truth[0][0].is_nan() && back.discrepancy.is_none());
    }

    #[test]
    fn degenerate_prediction_is_flagged() {
        let bad = BoundaryShape::new(ShapeClass::Peanut, vec![-0.1, 0.2], [0.0, 0.0], 1.0).unwrap();
        let c = reconstruct_curve(&bad, None, 32).unwrap();
        assert!(c.diagnostic.is_some());
        assert_eq!(c.pred.len(), 32);
    }

    #[test]
    fn alignment_removes_phase_shift() {
        let a = BoundaryShape::circle(0.3, [0.0, 0.0], 1.0);
        let mut b = kite();
        b.coeffs = vec![0.3, 0.0, 0.3];
        b.center = [0.0, 0.0];
        // A kite with beta = 0 and alpha = gamma is the same circle.
        assert!(aligned_discrepancy(&a, &b, 64).unwrap() < 1e-12);
        let mut c = a.clone();
        c.center = [0.02, 0.0];
        let aligned = aligned_discrepancy(&a, &c, 64).unwrap();
        assert!(aligned <= boundary_discrepancy(&a, &c, 64).unwrap() + 1e-15);
    }
}
