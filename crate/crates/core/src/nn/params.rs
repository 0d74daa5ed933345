use ndarray::{ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerShape, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One named parameter array, stored flat in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Param<T> {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param {
            name,
            shape,
            data: vec![T::zero(); n],
        }
    }

    /// Matrix view: leading axis × product of the rest.
    pub fn matrix(&self) -> ArrayView2<'_, T> {
        let rows = self.shape[0];
        let cols = self.data.len() / rows.max(1);
        ArrayView2::from_shape((rows, cols), &self.data).expect("parameter matrix shape")
    }

    pub fn vector(&self) -> ArrayView1<'_, T> {
        ArrayView1::from(&self.data[..])
    }
}

/// All trainable arrays of a network in layer order. Gradients and optimizer
/// moments use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    pub tensors: Vec<Param<T>>,
}

/// What a parameter array is, for initialization.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

/// Parameter layout of one layer: `(name, shape, init)` in storage order.
fn layer_layout(index: usize, input: LayerShape, layer: &LayerSpec) -> Vec<(String, Vec<usize>, Init)> {
    let n = |s: &str| format!("{index}.{}.{s}", layer.name());
    let glorot = |fan_in, fan_out| Init::Glorot { fan_in, fan_out };
    match (input, *layer) {
        (LayerShape::Seq(_, c), LayerSpec::CircConv { filters, kernel, .. }) => vec![
            (
                n("weight"),
                vec![filters, kernel, c],
                glorot(kernel * c, kernel * filters),
            ),
            (n("bias"), vec![filters], Init::Zeros),
        ],
        (LayerShape::Seq(_, c), LayerSpec::Attention { kernel_mix, reduction }) => {
            let h = c / reduction;
            vec![
                (
                    n("mix_weight"),
                    vec![c, kernel_mix, c],
                    glorot(kernel_mix * c, kernel_mix * c),
                ),
                (n("mix_bias"), vec![c], Init::Zeros),
                (n("norm_gain"), vec![c], Init::Ones),
                (n("norm_shift"), vec![c], Init::Zeros),
                (n("squeeze_weight"), vec![h, c], glorot(c, h)),
                (n("squeeze_bias"), vec![h], Init::Zeros),
                (n("excite_weight"), vec![c, h], glorot(h, c)),
                (n("excite_bias"), vec![c], Init::Zeros),
            ]
        }
        (LayerShape::Seq(_, c), LayerSpec::Bottleneck { filters, .. }) => vec![
            (n("weight"), vec![c, filters], glorot(c, filters)),
            (n("bias"), vec![filters], Init::Zeros),
        ],
        (LayerShape::Flat(d), LayerSpec::Dense { units, layer_norm, .. }) => {
            let mut v = vec![
                (n("weight"), vec![units, d], glorot(d, units)),
                (n("bias"), vec![units], Init::Zeros),
            ];
            if layer_norm {
                v.push((n("norm_gain"), vec![units], Init::Ones));
                v.push((n("norm_shift"), vec![units], Init::Zeros));
            }
            v
        }
        (LayerShape::Flat(d), LayerSpec::Output { units, .. }) => vec![
            (n("weight"), vec![units, d], glorot(d, units)),
            (n("bias"), vec![units], Init::Zeros),
        ],
        _ => Vec::new(),
    }
}

/// Number of parameter arrays each layer owns.
pub(crate) fn layer_tensor_counts(spec: &NetworkSpec, shapes: &[LayerShape]) -> Vec<usize> {
    spec.layers
        .iter()
        .enumerate()
        .map(|(i, l)| layer_layout(i, shapes[i], l).len())
        .collect()
}

impl<T: Scalar> Parameters<T> {
    /// Zero-filled arrays with the spec's layout.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let shapes = spec.resolve()?;
        let tensors = spec
            .layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| layer_layout(i, shapes[i], l))
            .map(|(name, shape, _)| Param::zeros(name, shape))
            .collect();
        Ok(Parameters { tensors })
    }

    /// Glorot-uniform weights `U(−L, L)`, `L = √(6/(fan_in + fan_out))`; biases
    /// and LayerNorm shifts zero, LayerNorm gains one. Values are drawn in
    /// `f64` so both precisions see the same initial network.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.resolve()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            for (name, shape, init) in layer_layout(i, shapes[i], layer) {
                let mut p = Param::zeros(name, shape);
                match init {
                    Init::Glorot { fan_in, fan_out } => {
                        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        for v in &mut p.data {
                            *v = T::lit(rng.random_range(-limit..limit));
                        }
                    }
                    Init::Ones => p.data.fill(T::one()),
                    Init::Zeros => {}
                }
                tensors.push(p);
            }
        }
        Ok(Parameters { tensors })
    }

    pub fn zeros_like(&self) -> Self {
        Parameters {
            tensors: self
                .tensors
                .iter()
                .map(|p| Param::zeros(p.name.clone(), p.shape.clone()))
                .collect(),
        }
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|p| p.data.len()).sum()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.shape == b.shape)
    }

    pub fn check_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{} parameter arrays", self.tensors.len()),
                other.tensors.len(),
            ))
        }
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.tensors.iter().flat_map(|p| p.data.iter().copied())
    }

    /// `‖θ‖₂` over every array jointly, accumulated in `f64`.
    pub fn global_norm(&self) -> f64 {
        self.values().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        for p in &mut self.tensors {
            for v in &mut p.data {
                *v *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        Parameters {
            tensors: self
                .tensors
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Flat index → (array, offset).
    pub fn locate(&self, mut index: usize) -> Option<(usize, usize)> {
        for (t, p) in self.tensors.iter().enumerate() {
            if index < p.data.len() {
                return Some((t, index));
            }
            index -= p.data.len();
        }
        None
    }
}
