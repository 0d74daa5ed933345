use serde::{Deserialize, Serialize};

use crate::dataio::Task;
use crate::error::{Error, Result};

/// Hidden-layer nonlinearity. Every paper architecture uses Swish; `Linear`
/// exists for verification networks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Swish,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Softmax,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    CircConv {
        filters: usize,
        kernel: usize,
        stride: usize,
        #[serde(default)]
        activation: Activation,
    },
    Attention {
        kernel_mix: usize,
        reduction: usize,
    },
    Bottleneck {
        filters: usize,
        #[serde(default)]
        activation: Activation,
    },
    Flatten,
    Dense {
        units: usize,
        #[serde(default)]
        dropout: f64,
        #[serde(default)]
        l2: f64,
        #[serde(default)]
        layer_norm: bool,
        #[serde(default)]
        activation: Activation,
    },
    Output {
        units: usize,
        activation: OutputActivation,
    },
}

impl LayerSpec {
    pub const fn conv(filters: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec::CircConv {
            filters,
            kernel,
            stride,
            activation: Activation::Swish,
        }
    }

    pub const fn bottleneck(filters: usize) -> Self {
        LayerSpec::Bottleneck {
            filters,
            activation: Activation::Swish,
        }
    }

    pub const fn dense(units: usize, dropout: f64, l2: f64) -> Self {
        LayerSpec::Dense {
            units,
            dropout,
            l2,
            layer_norm: true,
            activation: Activation::Swish,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::CircConv { .. } => "circ_conv",
            LayerSpec::Attention { .. } => "attention",
            LayerSpec::Bottleneck { .. } => "bottleneck",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Output { .. } => "output",
        }
    }
}

/// Activation shape between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerShape {
    /// `(T, C)`: angular positions × channels.
    Seq(usize, usize),
    Flat(usize),
}

impl LayerShape {
    pub const fn size(self) -> usize {
        match self {
            LayerShape::Seq(t, c) => t * c,
            LayerShape::Flat(d) => d,
        }
    }
}

/// Shape after `layer` applied to `input`, without validation.
pub const fn propagate(input: LayerShape, layer: &LayerSpec) -> LayerShape {
    match (input, *layer) {
        (LayerShape::Seq(t, _), LayerSpec::CircConv { filters, stride, .. }) => {
            LayerShape::Seq(t.div_ceil(stride), filters)
        }
        (LayerShape::Seq(t, c), LayerSpec::Attention { .. }) => LayerShape::Seq(t, c),
        (LayerShape::Seq(t, _), LayerSpec::Bottleneck { filters, .. }) => LayerShape::Seq(t, filters),
        (LayerShape::Seq(t, c), LayerSpec::Flatten) => LayerShape::Flat(t * c),
        (LayerShape::Flat(_), LayerSpec::Dense { units, .. }) => LayerShape::Flat(units),
        (LayerShape::Flat(_), LayerSpec::Output { units, .. }) => LayerShape::Flat(units),
        (s, _) => s,
    }
}

/// Trainable parameter count of one layer given its input shape. LayerNorm
/// gains and shifts are counted.
pub const fn layer_param_count(input: LayerShape, layer: &LayerSpec) -> usize {
    match (input, *layer) {
        (LayerShape::Seq(_, c), LayerSpec::CircConv { filters, kernel, .. }) => filters * kernel * c + filters,
        (LayerShape::Seq(_, c), LayerSpec::Attention { kernel_mix, reduction }) => {
            let h = c / reduction;
            (c * kernel_mix * c + c) + 2 * c + (h * c + h) + (c * h + c)
        }
        (LayerShape::Seq(_, c), LayerSpec::Bottleneck { filters, .. }) => c * filters + filters,
        (LayerShape::Flat(d), LayerSpec::Dense { units, layer_norm, .. }) => {
            d * units + units + if layer_norm { 2 * units } else { 0 }
        }
        (LayerShape::Flat(d), LayerSpec::Output { units, .. }) => d * units + units,
        _ => 0,
    }
}

/// Shape after the first `n` layers.
pub const fn shape_after(input: (usize, usize), layers: &[LayerSpec], n: usize) -> LayerShape {
    let mut shape = LayerShape::Seq(input.0, input.1);
    let mut i = 0;
    while i < n && i < layers.len() {
        shape = propagate(shape, &layers[i]);
        i += 1;
    }
    shape
}

pub const fn param_count(input: (usize, usize), layers: &[LayerSpec]) -> usize {
    let mut shape = LayerShape::Seq(input.0, input.1);
    let mut total = 0;
    let mut i = 0;
    while i < layers.len() {
        total += layer_param_count(shape, &layers[i]);
        shape = propagate(shape, &layers[i]);
        i += 1;
    }
    total
}

/// A full network description: input layout, ordered layers, task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// `(T0, C0)`.
    pub input: (usize, usize),
    pub layers: Vec<LayerSpec>,
    pub task: Task,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, input: (usize, usize), layers: Vec<LayerSpec>, task: Task) -> Self {
        NetworkSpec {
            name: name.into(),
            input,
            layers,
            task,
        }
    }

    /// Validates layer ordering and shape consistency; returns the input
    /// shape of every layer followed by the network output shape.
    pub fn resolve(&self) -> Result<Vec<LayerShape>> {
        let (t0, c0) = self.input;
        if t0 == 0 || c0 == 0 {
            return Err(Error::Spec(format!("input shape ({t0}, {c0}) has a zero dimension")));
        }
        let flattens = self.layers.iter().filter(|l| matches!(l, LayerSpec::Flatten)).count();
        if flattens != 1 {
            return Err(Error::Spec(format!(
                "expected exactly one flatten layer, found {flattens}"
            )));
        }
        match self.layers.last() {
            Some(LayerSpec::Output { activation, .. }) => {
                let expected = match self.task {
                    Task::Classification => OutputActivation::Softmax,
                    Task::Regression => OutputActivation::Linear,
                };
                if *activation != expected {
                    return Err(Error::Spec(format!(
                        "{:?} output does not fit {:?}",
                        activation, self.task
                    )));
                }
            }
            _ => return Err(Error::Spec("last layer must be the output layer".into())),
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut shape = LayerShape::Seq(t0, c0);
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: String| Err(Error::Spec(format!("layer {i} ({}): {msg}", layer.name())));
            match (shape, *layer) {
                (
                    LayerShape::Seq(..),
                    LayerSpec::CircConv {
                        filters,
                        kernel,
                        stride,
                        ..
                    },
                ) => {
                    if filters == 0 || kernel == 0 || stride == 0 {
                        return bad("filters, kernel and stride must be at least 1".into());
                    }
                }
                (LayerShape::Seq(_, c), LayerSpec::Attention { kernel_mix, reduction }) => {
                    if kernel_mix == 0 || reduction == 0 || c % reduction != 0 || c / reduction == 0 {
                        return bad(format!("{c} channels not divisible by reduction {reduction}"));
                    }
                }
                (LayerShape::Seq(_, c), LayerSpec::Bottleneck { filters, .. }) => {
                    if filters == 0 {
                        return bad("zero filters".into());
                    }
                    if filters >= c {
                        log::warn!("bottleneck with {filters} filters does not reduce {c} channels");
                    }
                }
                (LayerShape::Seq(..), LayerSpec::Flatten) => {}
                (LayerShape::Flat(_), LayerSpec::Dense { units, dropout, l2, .. }) => {
                    if units == 0 {
                        return bad("zero units".into());
                    }
                    if !(0.0..1.0).contains(&dropout) {
                        return bad(format!("dropout {dropout} outside [0, 1)"));
                    }
                    if !(l2 >= 0.0 && l2.is_finite()) {
                        return bad(format!("l2 weight {l2} must be finite and non-negative"));
                    }
                }
                (LayerShape::Flat(_), LayerSpec::Output { units, .. }) => {
                    if units == 0 {
                        return bad("zero units".into());
                    }
                    if i + 1 != self.layers.len() {
                        return bad("output layer must be last".into());
                    }
                }
                (LayerShape::Seq(..), _) => return bad("dense layers must follow the flatten layer".into()),
                (LayerShape::Flat(_), _) => return bad("convolutional layers must precede the flatten layer".into()),
            }
            shapes.push(shape);
            shape = propagate(shape, layer);
        }
        shapes.push(shape);
        Ok(shapes)
    }

    pub fn param_count(&self) -> usize {
        param_count(self.input, &self.layers)
    }

    pub fn output_dim(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Output { units, .. }) => *units,
            _ => 0,
        }
    }

    /// Product of all convolution strides.
    pub fn total_stride(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::CircConv { stride, .. } => *stride,
                _ => 1,
            })
            .product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(task: Task) -> NetworkSpec {
        let act = match task {
            Task::Classification => OutputActivation::Softmax,
            Task::Regression => OutputActivation::Linear,
        };
        NetworkSpec::new(
            "tiny",
            (8, 2),
            vec![
                LayerSpec::conv(4, 3, 1),
                LayerSpec::conv(4, 3, 2),
                LayerSpec::Attention {
                    kernel_mix: 3,
                    reduction: 2,
                },
                LayerSpec::bottleneck(2),
                LayerSpec::Flatten,
                LayerSpec::dense(5, 0.0, 0.0),
                LayerSpec::Output {
                    units: 3,
                    activation: act,
                },
            ],
            task,
        )
    }

    #[test]
    fn resolve_propagates_shapes() {
        let shapes = tiny(Task::Classification).resolve().unwrap();
        assert_eq!(shapes[2], LayerShape::Seq(4, 4));
        assert_eq!(shapes[5], LayerShape::Flat(8));
        assert_eq!(*shapes.last().unwrap(), LayerShape::Flat(3));
    }

    #[test]
    fn resolve_rejects_bad_orderings() {
        let mut s = tiny(Task::Classification);
        s.layers.swap(3, 5);
        assert!(s.resolve().is_err());
        let mut s = tiny(Task::Classification);
        s.layers.remove(4);
        assert!(s.resolve().is_err());
        let mut s = tiny(Task::Classification);
        s.layers[2] = LayerSpec::Attention {
            kernel_mix: 3,
            reduction: 3,
        };
        assert!(s.resolve().is_err());
        let mut s = tiny(Task::Classification);
        s.layers[5] = LayerSpec::dense(5, 1.0, 0.0);
        assert!(s.resolve().is_err());
        let mut s = tiny(Task::Classification);
        s.task = Task::Regression;
        assert!(s.resolve().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let s = tiny(Task::Regression);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<NetworkSpec>(&text).unwrap(), s);
        let minimal: LayerSpec = serde_json::from_str(r#"{"kind":"dense","units":7}"#).unwrap();
        assert_eq!(
            minimal,
            LayerSpec::Dense {
                units: 7,
                dropout: 0.0,
                l2: 0.0,
                layer_norm: false,
                activation: Activation::Swish
            }
        );
    }
}
