use serde::{Deserialize, Serialize};

use super::curves::aligned_discrepancy;
use super::registry::{Measurements, ModelRegistry};
use crate::dataio::Obstacle;
use crate::error::Result;
use crate::geometry::{BoundaryShape, ShapeClass};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisclassifiedSample {
    pub shape_id: String,
    pub truth: ShapeClass,
    pub predicted: ShapeClass,
    /// Reconstruction by the predicted class's regressor.
    pub reconstruction: BoundaryShape,
    /// Matched-parameter RMS distance to the true boundary, minimized over
    /// cyclic shifts of the parameter grid.
    pub discrepancy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCell {
    pub truth: ShapeClass,
    pub predicted: ShapeClass,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisclassificationReport {
    pub samples: usize,
    pub misclassified: Vec<MisclassifiedSample>,
    /// Every (truth, prediction) pair over the three classes.
    pub confusion: Vec<ConfusionCell>,
}

/// Runs every obstacle through the registry and reports the misclassified
/// ones together with their cross-class reconstructions.
pub fn misclassification_report<T: Scalar>(
    registry: &ModelRegistry<T>,
    obstacles: &[Obstacle],
    layout: (usize, usize),
    points: usize,
) -> Result<MisclassificationReport> {
    let items: Vec<Measurements> = obstacles
        .iter()
        .map(|o| Measurements::single(layout.0, layout.1, o.features.clone()))
        .collect();
    let solutions = registry.infer_batch(&items)?;
    let mut confusion: Vec<ConfusionCell> = ShapeClass::ALL
        .iter()
        .flat_map(|&truth| {
            ShapeClass::ALL.iter().map(move |&predicted| ConfusionCell {
                truth,
                predicted,
                count: 0,
            })
        })
        .collect();
    let mut misclassified = Vec::new();
    for (o, s) in obstacles.iter().zip(solutions) {
        let truth = o.shape.class;
        if let Some(cell) = confusion
            .iter_mut()
            .find(|c| c.truth == truth && c.predicted == s.class)
        {
            cell.count += 1;
        }
        if s.class != truth {
            misclassified.push(MisclassifiedSample {
                shape_id: o.shape_id.clone(),
                truth,
                predicted: s.class,
                discrepancy: aligned_discrepancy(&s.shape, &o.shape, points)?,
                reconstruction: s.shape,
            });
        }
    }
    Ok(MisclassificationReport {
        samples: obstacles.len(),
        misclassified,
        confusion,
    })
}
