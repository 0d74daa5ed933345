//! The two-stage inverse solver: classify the obstacle, route the
//! measurements to that class's regressor, and assemble the boundary. Also
//! runs the experiment suites.

mod analysis;
mod curves;
mod experiment;
mod registry;

pub use analysis::{misclassification_report, ConfusionCell, MisclassificationReport, MisclassifiedSample};
pub use curves::{aligned_discrepancy, reconstruct_curve, Curve, CURVE_HEADER};
pub use experiment::{
    histogram_csv, run_experiment, run_experiment_on, select_reconstructions, write_outcome, ExperimentConfig,
    ExperimentOutcome, ExperimentReport, ReconstructionSummary, SampleError, Suite, TrainOverrides,
    EXPERIMENT_NOISE_LEVELS, HISTOGRAM_BINS, STAR_FIXED_IMPEDANCE,
};
pub use registry::{
    regressor_stem, train_registry, InverseSolution, Manifest, ManifestEntry, Measurements, ModelRegistry, Provenance,
    CLASSIFIER_STEM, MANIFEST_FILE,
};
