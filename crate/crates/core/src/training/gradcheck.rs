//! Finite-difference verification of the analytic backward passes.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy_labels, mse, mse_grad, softmax_cross_entropy_grad};
use crate::dataio::Task;
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, Mode, Network, NetworkSpec, OutputActivation, Parameters};

/// Largest network the harness accepts.
pub const MAX_CHECK_PARAMS: usize = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor in `|a − n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    pub batch: usize,
    pub tolerance: f64,
    /// Regression targets are drawn as `output + U(−spread, spread)`.
    pub target_spread: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-6,
            floor: 1e-4,
            batch: 3,
            tolerance: 1e-4,
            target_spread: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub name: String,
    pub parameters: usize,
    pub max_rel_err: f64,
    /// Parameter array and offset of the worst entry.
    pub worst: String,
    pub tolerance: f64,
    pub passed: bool,
}

enum Supervision {
    Labels(Vec<usize>),
    Values(Array2<f64>),
}

struct Problem {
    x: Array3<f64>,
    y: Supervision,
    mask_seed: u64,
}

impl Problem {
    fn loss(&self, net: &Network<f64>) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.mask_seed);
        let cache = net.forward_train(self.x.view(), Mode::Train(&mut rng))?;
        let data = match &self.y {
            Supervision::Labels(l) => cross_entropy_labels(cache.output.view(), l)?,
            Supervision::Values(v) => mse(cache.output.view(), v.view())?,
        };
        Ok(data + net.l2_penalty())
    }

    fn gradient(&self, net: &Network<f64>) -> Result<Parameters<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.mask_seed);
        let cache = net.forward_train(self.x.view(), Mode::Train(&mut rng))?;
        let d = match &self.y {
            Supervision::Labels(l) => softmax_cross_entropy_grad(cache.output.view(), l),
            Supervision::Values(v) => mse_grad(cache.output.view(), v.view()),
        };
        net.backward(&cache, d.view())
    }
}

/// Compares every analytic gradient entry of a randomly initialized
/// double-precision network against central differences. Dropout masks are
/// frozen by reseeding the mask generator for every forward pass. `corrupt`
/// lets callers tamper with the analytic gradients.
pub fn grad_check_with(
    spec: &NetworkSpec,
    seed: u64,
    opts: &GradCheckOptions,
    corrupt: Option<&dyn Fn(&mut Parameters<f64>)>,
) -> Result<GradCheckReport> {
    let mut net = Network::<f64>::new(spec.clone(), seed)?;
    if net.param_count() > MAX_CHECK_PARAMS {
        return Err(Error::InvalidConfig(format!(
            "gradient check limited to {MAX_CHECK_PARAMS} parameters, '{}' has {}",
            spec.name,
            net.param_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    // Move biases, gains and shifts off their initial values.
    for p in &mut net.params_mut().tensors {
        for v in &mut p.data {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let (t0, c0) = spec.input;
    let x = Array3::from_shape_fn((opts.batch, t0, c0), |_| rng.random_range(-1.0..1.0));
    let k = spec.output_dim();
    let y = match spec.task {
        Task::Classification => Supervision::Labels((0..opts.batch).map(|_| rng.random_range(0..k)).collect()),
        Task::Regression => {
            let base = net.predict_batch(x.view())?;
            Supervision::Values(base.mapv(|v| v + rng.random_range(-opts.target_spread..opts.target_spread)))
        }
    };
    let problem = Problem {
        x,
        y,
        mask_seed: seed.wrapping_add(17),
    };

    let mut analytic = problem.gradient(&net)?;
    if let Some(f) = corrupt {
        f(&mut analytic);
    }
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    for t in 0..analytic.tensors.len() {
        for j in 0..analytic.tensors[t].data.len() {
            let orig = net.params().tensors[t].data[j];
            net.params_mut().tensors[t].data[j] = orig + opts.step;
            let up = problem.loss(&net)?;
            net.params_mut().tensors[t].data[j] = orig - opts.step;
            let down = problem.loss(&net)?;
            net.params_mut().tensors[t].data[j] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic.tensors[t].data[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            if rel > max_rel || !rel.is_finite() {
                max_rel = if rel.is_finite() { rel } else { f64::INFINITY };
                worst = format!("{}[{j}]", analytic.tensors[t].name);
            }
        }
    }
    Ok(GradCheckReport {
        name: spec.name.clone(),
        parameters: net.param_count(),
        max_rel_err: max_rel,
        worst,
        tolerance: opts.tolerance,
        passed: max_rel < opts.tolerance,
    })
}

pub fn grad_check(spec: &NetworkSpec, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    grad_check_with(
        spec,
        seed,
        &GradCheckOptions {
            tolerance,
            ..Default::default()
        },
        None,
    )
}

fn dense(units: usize, dropout: f64, l2: f64, layer_norm: bool, activation: Activation) -> LayerSpec {
    LayerSpec::Dense {
        units,
        dropout,
        l2,
        layer_norm,
        activation,
    }
}

const LINEAR_OUT: LayerSpec = LayerSpec::Output {
    units: 3,
    activation: OutputActivation::Linear,
};
const SOFTMAX_OUT: LayerSpec = LayerSpec::Output {
    units: 3,
    activation: OutputActivation::Softmax,
};

/// Small networks isolating each layer kind, plus a composed network with
/// every kind.
pub fn tiny_specs() -> Vec<NetworkSpec> {
    let reg = Task::Regression;
    let cls = Task::Classification;
    vec![
        NetworkSpec::new(
            "circ_conv",
            (7, 2),
            vec![
                LayerSpec::conv(3, 3, 1),
                LayerSpec::conv(2, 4, 2),
                LayerSpec::Flatten,
                LINEAR_OUT,
            ],
            reg,
        ),
        NetworkSpec::new(
            "attention",
            (6, 4),
            vec![
                LayerSpec::Attention {
                    kernel_mix: 3,
                    reduction: 2,
                },
                LayerSpec::Flatten,
                LINEAR_OUT,
            ],
            reg,
        ),
        NetworkSpec::new(
            "bottleneck",
            (5, 4),
            vec![LayerSpec::bottleneck(2), LayerSpec::Flatten, LINEAR_OUT],
            reg,
        ),
        NetworkSpec::new(
            "dense",
            (4, 2),
            vec![
                LayerSpec::Flatten,
                dense(6, 0.0, 0.0, false, Activation::Swish),
                dense(5, 0.0, 0.0, true, Activation::Swish),
                LINEAR_OUT,
            ],
            reg,
        ),
        NetworkSpec::new(
            "dense_dropout_l2",
            (4, 2),
            vec![
                LayerSpec::Flatten,
                dense(8, 0.3, 0.05, true, Activation::Swish),
                LINEAR_OUT,
            ],
            reg,
        ),
        NetworkSpec::new(
            "softmax_output",
            (4, 2),
            vec![
                LayerSpec::Flatten,
                dense(5, 0.0, 0.0, true, Activation::Swish),
                SOFTMAX_OUT,
            ],
            cls,
        ),
        composed_spec(),
    ]
}

/// `T = 8, C = 2`: two circular convolutions, attention, bottleneck, and a
/// dense head with LayerNorm, dropout and L2.
pub fn composed_spec() -> NetworkSpec {
    NetworkSpec::new(
        "composed",
        (8, 2),
        vec![
            LayerSpec::conv(4, 3, 1),
            LayerSpec::conv(4, 5, 2),
            LayerSpec::Attention {
                kernel_mix: 3,
                reduction: 2,
            },
            LayerSpec::bottleneck(3),
            LayerSpec::Flatten,
            dense(6, 0.2, 0.01, true, Activation::Swish),
            SOFTMAX_OUT,
        ],
        Task::Classification,
    )
}

/// Affine-only network: every layer linear, no normalization.
pub fn linear_spec() -> NetworkSpec {
    NetworkSpec::new(
        "linear",
        (6, 2),
        vec![
            LayerSpec::CircConv {
                filters: 3,
                kernel: 3,
                stride: 1,
                activation: Activation::Linear,
            },
            LayerSpec::CircConv {
                filters: 3,
                kernel: 2,
                stride: 2,
                activation: Activation::Linear,
            },
            LayerSpec::Bottleneck {
                filters: 2,
                activation: Activation::Linear,
            },
            LayerSpec::Flatten,
            dense(4, 0.0, 0.0, false, Activation::Linear),
            LINEAR_OUT,
        ],
        Task::Regression,
    )
}

/// Runs [`grad_check`] over [`tiny_specs`].
pub fn gradcheck_suite(seed: u64, tolerance: f64) -> Result<Vec<GradCheckReport>> {
    tiny_specs().iter().map(|s| grad_check(s, seed, tolerance)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for r in gradcheck_suite(1, 1e-4).unwrap() {
            assert!(r.passed, "{}: {} at {}", r.name, r.max_rel_err, r.worst);
        }
    }

    #[test]
    fn linear_network_is_nearly_exact() {
        let opts = GradCheckOptions {
            tolerance: 1e-8,
            target_spread: 0.01,
            ..Default::default()
        };
        let r = grad_check_with(&linear_spec(), 2, &opts, None).unwrap();
        assert!(r.passed, "{} at {}", r.max_rel_err, r.worst);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let corrupt = |g: &mut Parameters<f64>| g.tensors[0].data[0] *= 1.01;
        let r = grad_check_with(&composed_spec(), 3, &GradCheckOptions::default(), Some(&corrupt)).unwrap();
        assert!(!r.passed);
    }
}
