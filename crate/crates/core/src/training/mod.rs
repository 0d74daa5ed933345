//! Losses, optimization, the training loop, evaluation metrics and the
//! gradient-check harness.

mod evaluate;
pub mod gradcheck;
mod loss;
mod metrics;
mod model;
mod optim;
mod trainer;

pub use evaluate::{evaluate_classification, evaluate_regression, noise_sweep, NoiseLevelReport, DEFAULT_NOISE_LEVELS};
pub use gradcheck::{grad_check, grad_check_with, gradcheck_suite, GradCheckOptions, GradCheckReport};
pub use loss::{cross_entropy, cross_entropy_labels, mse, mse_grad, softmax_cross_entropy_grad, PROB_FLOOR};
pub use metrics::{
    classification_report, histogram, regression_report, sample_rmse, ClassificationReport, Histogram, ParameterMetric,
    RegressionReport,
};
pub use model::{argmax, features_to_array, Model, ModelMeta};
pub use optim::{clip_gradients, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{
    check_compatible, evaluate_loss, fit, prepare_split, train, EpochRecord, Targets, TrainConfig, TrainData,
    TrainHistory, DEFAULT_MAX_EPOCHS,
};
