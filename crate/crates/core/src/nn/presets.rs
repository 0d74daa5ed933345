//! The five published architectures and their training hyperparameters.

use serde::{Deserialize, Serialize};

use super::spec::{param_count, shape_after, LayerShape, LayerSpec, NetworkSpec, OutputActivation};
use crate::dataio::Task;
use crate::error::{Error, Result};

pub const AP1_INPUT: (usize, usize) = (32, 2);
pub const AP1_LAYERS: &[LayerSpec] = &[
    LayerSpec::conv(64, 5, 1),
    LayerSpec::conv(64, 5, 2),
    LayerSpec::conv(64, 7, 1),
    LayerSpec::bottleneck(16),
    LayerSpec::Flatten,
    LayerSpec::dense(128, 0.2, 0.0),
    LayerSpec::dense(64, 0.1, 0.0),
    LayerSpec::Output {
        units: 3,
        activation: OutputActivation::Softmax,
    },
];

pub const AP2_INPUT: (usize, usize) = (32, 2);
pub const AP2_LAYERS: &[LayerSpec] = &[
    LayerSpec::conv(64, 5, 1),
    LayerSpec::conv(64, 5, 2),
    LayerSpec::bottleneck(16),
    LayerSpec::Flatten,
    LayerSpec::dense(64, 0.0, 0.0),
    LayerSpec::Output {
        units: 5,
        activation: OutputActivation::Linear,
    },
];

pub const AP4_INPUT: (usize, usize) = (32, 2);
pub const AP4_LAYERS: &[LayerSpec] = &[
    LayerSpec::conv(64, 5, 1),
    LayerSpec::conv(64, 5, 2),
    LayerSpec::bottleneck(16),
    LayerSpec::Flatten,
    LayerSpec::dense(64, 0.0, 0.0),
    LayerSpec::Output {
        units: 6,
        activation: OutputActivation::Linear,
    },
];

pub const AP7_INPUT: (usize, usize) = (128, 4);
pub const AP7_LAYERS: &[LayerSpec] = &[
    LayerSpec::conv(128, 5, 1),
    LayerSpec::conv(128, 5, 2),
    LayerSpec::conv(128, 15, 1),
    LayerSpec::conv(128, 31, 1),
    LayerSpec::bottleneck(64),
    LayerSpec::Flatten,
    LayerSpec::dense(256, 0.1, 0.0),
    LayerSpec::dense(128, 0.0, 0.0),
    LayerSpec::Output {
        units: 13,
        activation: OutputActivation::Linear,
    },
];

pub const AP10_INPUT: (usize, usize) = (128, 8);
pub const AP10_LAYERS: &[LayerSpec] = &[
    LayerSpec::conv(128, 5, 1),
    LayerSpec::conv(128, 5, 2),
    LayerSpec::conv(128, 15, 1),
    LayerSpec::conv(128, 31, 1),
    LayerSpec::Attention {
        kernel_mix: 3,
        reduction: 8,
    },
    LayerSpec::bottleneck(64),
    LayerSpec::Flatten,
    LayerSpec::dense(512, 0.3, 1e-4),
    LayerSpec::dense(256, 0.2, 1e-4),
    LayerSpec::dense(128, 0.1, 1e-4),
    LayerSpec::Output {
        units: 14,
        activation: OutputActivation::Linear,
    },
];

pub const AP1_PARAMS: usize = 92_755;
pub const AP2_PARAMS: usize = 39_189;
pub const AP4_PARAMS: usize = 39_254;
pub const AP7_PARAMS: usize = 1_931_085;
pub const AP10_PARAMS: usize = 3_168_734;

const fn shape_is(s: LayerShape, t: usize, c: usize) -> bool {
    matches!(s, LayerShape::Seq(a, b) if a == t && b == c)
}

const fn flat_is(s: LayerShape, d: usize) -> bool {
    matches!(s, LayerShape::Flat(a) if a == d)
}

// Inter-layer shapes as printed in the architecture tables.
const _: () = {
    assert!(shape_is(shape_after(AP1_INPUT, AP1_LAYERS, 1), 32, 64));
    assert!(shape_is(shape_after(AP1_INPUT, AP1_LAYERS, 2), 16, 64));
    assert!(shape_is(shape_after(AP1_INPUT, AP1_LAYERS, 3), 16, 64));
    assert!(shape_is(shape_after(AP1_INPUT, AP1_LAYERS, 4), 16, 16));
    assert!(flat_is(shape_after(AP1_INPUT, AP1_LAYERS, 5), 256));
    assert!(flat_is(shape_after(AP1_INPUT, AP1_LAYERS, 8), 3));
    assert!(param_count(AP1_INPUT, AP1_LAYERS) == AP1_PARAMS);

    assert!(shape_is(shape_after(AP2_INPUT, AP2_LAYERS, 2), 16, 64));
    assert!(flat_is(shape_after(AP2_INPUT, AP2_LAYERS, 4), 256));
    assert!(flat_is(shape_after(AP2_INPUT, AP2_LAYERS, 6), 5));
    assert!(param_count(AP2_INPUT, AP2_LAYERS) == AP2_PARAMS);

    assert!(flat_is(shape_after(AP4_INPUT, AP4_LAYERS, 4), 256));
    assert!(flat_is(shape_after(AP4_INPUT, AP4_LAYERS, 6), 6));
    assert!(param_count(AP4_INPUT, AP4_LAYERS) == AP4_PARAMS);

    assert!(shape_is(shape_after(AP7_INPUT, AP7_LAYERS, 1), 128, 128));
    assert!(shape_is(shape_after(AP7_INPUT, AP7_LAYERS, 2), 64, 128));
    assert!(shape_is(shape_after(AP7_INPUT, AP7_LAYERS, 4), 64, 128));
    assert!(shape_is(shape_after(AP7_INPUT, AP7_LAYERS, 5), 64, 64));
    assert!(flat_is(shape_after(AP7_INPUT, AP7_LAYERS, 6), 4096));
    assert!(flat_is(shape_after(AP7_INPUT, AP7_LAYERS, 9), 13));
    assert!(param_count(AP7_INPUT, AP7_LAYERS) == AP7_PARAMS);

    assert!(shape_is(shape_after(AP10_INPUT, AP10_LAYERS, 2), 64, 128));
    assert!(shape_is(shape_after(AP10_INPUT, AP10_LAYERS, 5), 64, 128));
    assert!(shape_is(shape_after(AP10_INPUT, AP10_LAYERS, 6), 64, 64));
    assert!(flat_is(shape_after(AP10_INPUT, AP10_LAYERS, 7), 4096));
    assert!(flat_is(shape_after(AP10_INPUT, AP10_LAYERS, 11), 14));
    assert!(param_count(AP10_INPUT, AP10_LAYERS) == AP10_PARAMS);
};

/// Optimizer and early-stopping settings attached to a preset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetTraining {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub min_delta: f64,
    pub patience: usize,
    pub clip: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Ap1,
    Ap2,
    Ap4,
    Ap7,
    Ap10,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Ap1, Preset::Ap2, Preset::Ap4, Preset::Ap7, Preset::Ap10];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ap1 => "ap1",
            Preset::Ap2 => "ap2",
            Preset::Ap4 => "ap4",
            Preset::Ap7 => "ap7",
            Preset::Ap10 => "ap10",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::InvalidConfig(format!("unknown preset '{name}' (expected ap1, ap2, ap4, ap7 or ap10)"))
            })
    }

    pub fn input(self) -> (usize, usize) {
        match self {
            Preset::Ap1 => AP1_INPUT,
            Preset::Ap2 => AP2_INPUT,
            Preset::Ap4 => AP4_INPUT,
            Preset::Ap7 => AP7_INPUT,
            Preset::Ap10 => AP10_INPUT,
        }
    }

    pub fn layers(self) -> &'static [LayerSpec] {
        match self {
            Preset::Ap1 => AP1_LAYERS,
            Preset::Ap2 => AP2_LAYERS,
            Preset::Ap4 => AP4_LAYERS,
            Preset::Ap7 => AP7_LAYERS,
            Preset::Ap10 => AP10_LAYERS,
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            Preset::Ap1 => AP1_PARAMS,
            Preset::Ap2 => AP2_PARAMS,
            Preset::Ap4 => AP4_PARAMS,
            Preset::Ap7 => AP7_PARAMS,
            Preset::Ap10 => AP10_PARAMS,
        }
    }

    pub fn task(self) -> Task {
        match self {
            Preset::Ap1 => Task::Classification,
            _ => Task::Regression,
        }
    }

    pub fn spec(self) -> NetworkSpec {
        NetworkSpec::new(self.name(), self.input(), self.layers().to_vec(), self.task())
    }

    pub fn training(self) -> PresetTraining {
        match self {
            Preset::Ap1 => PresetTraining {
                learning_rate: 1e-5,
                batch_size: 64,
                min_delta: 1e-3,
                patience: 150,
                clip: None,
            },
            Preset::Ap2 | Preset::Ap4 => PresetTraining {
                learning_rate: 1e-4,
                batch_size: 128,
                min_delta: 1e-4,
                patience: 80,
                clip: None,
            },
            Preset::Ap7 => PresetTraining {
                learning_rate: 1e-4,
                batch_size: 128,
                min_delta: 1e-4,
                patience: 200,
                clip: None,
            },
            Preset::Ap10 => PresetTraining {
                learning_rate: 5e-5,
                batch_size: 128,
                min_delta: 1e-4,
                patience: 200,
                clip: Some(1.0),
            },
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::from_name(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_and_count() {
        for p in Preset::ALL {
            let spec = p.spec();
            spec.resolve().unwrap();
            assert_eq!(spec.param_count(), p.param_count());
            assert_eq!(Preset::from_name(&p.name().to_uppercase()).unwrap(), p);
        }
        assert_eq!(Preset::Ap10.spec().output_dim(), 14);
        assert_eq!(Preset::Ap7.spec().total_stride(), 2);
        assert!(Preset::from_name("ap3").is_err());
    }
}
