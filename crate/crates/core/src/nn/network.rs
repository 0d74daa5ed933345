use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::RngCore;

use super::ops::{
    attention_backward_batch, attention_forward_batch, conv_backward_batch, conv_forward_batch, dense_backward,
    dense_forward, dropout_forward, layer_norm_backward, layer_norm_forward, pointwise_backward_batch,
    pointwise_forward_batch, softmax_rows, swish, swish_grad, AttentionCache, AttentionParams, DropoutMode,
    LayerNormCache,
};
use super::params::{layer_tensor_counts, Parameters};
use super::spec::{Activation, LayerShape, LayerSpec, NetworkSpec, OutputActivation};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Forward-pass mode. Training draws dropout masks from the given generator.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

enum Act<T> {
    Seq(Array3<T>),
    Flat(Array2<T>),
}

#[derive(Clone, Debug)]
enum LayerCache<T> {
    Conv {
        input: Array3<T>,
        z: Array3<T>,
    },
    Attention(Box<AttentionCache<T>>),
    Bottleneck {
        input: Array3<T>,
        z: Array3<T>,
    },
    Flatten {
        t: usize,
        c: usize,
    },
    Dense {
        input: Array2<T>,
        z: Array2<T>,
        ln: Option<LayerNormCache<T>>,
        mask: Option<Array2<T>>,
    },
    Output {
        input: Array2<T>,
    },
}

/// Intermediates recorded by a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    version: u64,
    layers: Vec<LayerCache<T>>,
    /// Pre-activation output-layer values.
    pub logits: Array2<T>,
    /// Probabilities (classification) or parameter estimates (regression).
    pub output: Array2<T>,
}

/// A network: spec plus parameters, with batched forward and backward passes.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    spec: NetworkSpec,
    shapes: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Parameters<T>,
    version: u64,
}

fn apply_act<T: Scalar>(z: &Array3<T>, act: Activation) -> Array3<T> {
    match act {
        Activation::Swish => z.mapv(swish),
        Activation::Linear => z.clone(),
    }
}

fn act_backward<T: Scalar, D: ndarray::Dimension>(
    dy: ndarray::Array<T, D>,
    z: &ndarray::Array<T, D>,
    act: Activation,
) -> ndarray::Array<T, D> {
    match act {
        Activation::Swish => {
            let mut dz = dy;
            dz.zip_mut_with(z, |d, &zv| *d *= swish_grad(zv));
            dz
        }
        Activation::Linear => dy,
    }
}

impl<T: Scalar> Network<T> {
    /// Builds a network with freshly initialized parameters.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let params = Parameters::init(&spec, seed)?;
        Self::with_params(spec, params)
    }

    pub fn with_params(spec: NetworkSpec, params: Parameters<T>) -> Result<Self> {
        let shapes = spec.resolve()?;
        let expected = Parameters::<T>::zeros(&spec)?;
        expected.check_layout(&params)?;
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let mut acc = 0;
        for n in layer_tensor_counts(&spec, &shapes) {
            offsets.push(acc);
            acc += n;
        }
        Ok(Network {
            spec,
            shapes,
            offsets,
            params,
            version: next_version(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Input shape of every layer, then the output shape.
    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut Parameters<T> {
        self.version = next_version();
        &mut self.params
    }

    pub fn set_params(&mut self, params: Parameters<T>) -> Result<()> {
        self.params.check_layout(&params)?;
        self.params = params;
        self.version = next_version();
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.spec.input
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Same network in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            shapes: self.shapes.clone(),
            offsets: self.offsets.clone(),
            params: self.params.cast(),
            version: next_version(),
        }
    }

    fn p(&self, layer: usize, k: usize) -> &super::params::Param<T> {
        &self.params.tensors[self.offsets[layer] + k]
    }

    fn attention_params(&self, layer: usize) -> AttentionParams<'_, T> {
        AttentionParams {
            w_mix: self.p(layer, 0).matrix(),
            b_mix: self.p(layer, 1).vector(),
            gain: self.p(layer, 2).vector(),
            shift: self.p(layer, 3).vector(),
            w1: self.p(layer, 4).matrix(),
            b1: self.p(layer, 5).vector(),
            w2: self.p(layer, 6).matrix(),
            b2: self.p(layer, 7).vector(),
        }
    }

    /// `λ Σ ‖W‖²` over the weights of regularized dense layers.
    pub fn l2_penalty(&self) -> f64 {
        let mut total = 0.0;
        for (i, layer) in self.spec.layers.iter().enumerate() {
            if let LayerSpec::Dense { l2, .. } = layer {
                if *l2 > 0.0 {
                    let ss: f64 = self.p(i, 0).data.iter().map(|v| v.as_f64() * v.as_f64()).sum();
                    total += l2 * ss;
                }
            }
        }
        total
    }

    fn check_input(&self, x: &ArrayView3<'_, T>) -> Result<()> {
        let (t0, c0) = self.spec.input;
        let (_, t, c) = x.dim();
        if (t, c) != (t0, c0) {
            return Err(Error::shape(format!("({t0}, {c0}) input"), format!("({t}, {c})")));
        }
        Ok(())
    }

    fn run(
        &self,
        x: ArrayView3<'_, T>,
        mut mode: Mode<'_>,
        keep: bool,
        stop_at_flatten: bool,
    ) -> Result<(Act<T>, Vec<LayerCache<T>>)> {
        self.check_input(&x)?;
        let mut caches = Vec::with_capacity(if keep { self.spec.layers.len() } else { 0 });
        let mut act = Act::Seq(x.to_owned());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            if stop_at_flatten && matches!(layer, LayerSpec::Flatten) {
                break;
            }
            let (next, cache) = match (act, *layer) {
                (
                    Act::Seq(h),
                    LayerSpec::CircConv {
                        kernel,
                        stride,
                        activation,
                        ..
                    },
                ) => {
                    let z = conv_forward_batch(h.view(), self.p(i, 0).matrix(), self.p(i, 1).vector(), kernel, stride);
                    let y = apply_act(&z, activation);
                    (Act::Seq(y), keep.then(|| LayerCache::Conv { input: h, z }))
                }
                (Act::Seq(h), LayerSpec::Attention { kernel_mix, .. }) => {
                    let (y, cache) = attention_forward_batch(h.view(), &self.attention_params(i), kernel_mix);
                    (Act::Seq(y), keep.then(|| LayerCache::Attention(Box::new(cache))))
                }
                (Act::Seq(h), LayerSpec::Bottleneck { activation, .. }) => {
                    let z = pointwise_forward_batch(h.view(), self.p(i, 0).matrix(), self.p(i, 1).vector());
                    let y = apply_act(&z, activation);
                    (Act::Seq(y), keep.then(|| LayerCache::Bottleneck { input: h, z }))
                }
                (Act::Seq(h), LayerSpec::Flatten) => {
                    let (b, t, c) = h.dim();
                    let flat = h
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order((b, t * c))
                        .expect("flatten");
                    (Act::Flat(flat), keep.then_some(LayerCache::Flatten { t, c }))
                }
                (
                    Act::Flat(h),
                    LayerSpec::Dense {
                        dropout,
                        layer_norm,
                        activation,
                        ..
                    },
                ) => {
                    let z = dense_forward(h.view(), self.p(i, 0).matrix(), self.p(i, 1).vector());
                    let a = match activation {
                        Activation::Swish => z.mapv(swish),
                        Activation::Linear => z.clone(),
                    };
                    let (n, ln) = if layer_norm {
                        let (n, c) = layer_norm_forward(a.view(), self.p(i, 2).vector(), self.p(i, 3).vector());
                        (n, Some(c))
                    } else {
                        (a, None)
                    };
                    let dmode = match &mut mode {
                        Mode::Eval => DropoutMode::Eval,
                        Mode::Train(rng) => DropoutMode::Train(&mut **rng),
                    };
                    let (y, mask) = dropout_forward(n.view(), dropout, dmode)?;
                    (Act::Flat(y), keep.then(|| LayerCache::Dense { input: h, z, ln, mask }))
                }
                (Act::Flat(h), LayerSpec::Output { .. }) => {
                    let z = dense_forward(h.view(), self.p(i, 0).matrix(), self.p(i, 1).vector());
                    (Act::Flat(z), keep.then(|| LayerCache::Output { input: h }))
                }
                _ => {
                    return Err(Error::Spec(format!(
                        "layer {i} received an activation of the wrong rank"
                    )))
                }
            };
            let finite = match &next {
                Act::Seq(a) => a.iter().all(|v| v.is_finite()),
                Act::Flat(a) => a.iter().all(|v| v.is_finite()),
            };
            if !finite {
                return Err(Error::NonFinite(format!("layer {i} ({})", layer.name())));
            }
            if let Some(c) = cache {
                caches.push(c);
            }
            act = next;
        }
        Ok((act, caches))
    }

    fn finish(&self, logits: &Array2<T>) -> Array2<T> {
        match self.spec.layers.last() {
            Some(LayerSpec::Output {
                activation: OutputActivation::Softmax,
                ..
            }) => softmax_rows(logits.view()),
            _ => logits.clone(),
        }
    }

    /// Batched inference on a `(batch, T0, C0)` array.
    pub fn predict_batch(&self, x: ArrayView3<'_, T>) -> Result<Array2<T>> {
        match self.run(x, Mode::Eval, false, false)? {
            (Act::Flat(logits), _) => Ok(self.finish(&logits)),
            _ => Err(Error::Spec("network ended before its output layer".into())),
        }
    }

    /// Single-sample inference.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        let out = self.predict_batch(x.view().insert_axis(Axis(0)))?;
        Ok(out.row(0).to_vec())
    }

    /// Features entering the flatten layer, for a single sample.
    pub fn pre_flatten(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self.run(x.view().insert_axis(Axis(0)), Mode::Eval, false, true)? {
            (Act::Seq(a), _) => Ok(Tensor::from_array(a.index_axis_move(Axis(0), 0))),
            _ => Err(Error::Spec("no convolutional features before flatten".into())),
        }
    }

    /// Forward pass that records everything [`Network::backward`] needs.
    pub fn forward_train(&self, x: ArrayView3<'_, T>, mode: Mode<'_>) -> Result<ForwardCache<T>> {
        match self.run(x, mode, true, false)? {
            (Act::Flat(logits), layers) => {
                let output = self.finish(&logits);
                Ok(ForwardCache {
                    version: self.version,
                    layers,
                    logits,
                    output,
                })
            }
            _ => Err(Error::Spec("network ended before its output layer".into())),
        }
    }

    /// Gradients of `loss + λ Σ‖W‖²` given `∂loss/∂logits` (pre-softmax for
    /// classification). The cache must come from this network with its
    /// current parameters.
    pub fn backward(&self, cache: &ForwardCache<T>, d_logits: ArrayView2<'_, T>) -> Result<Parameters<T>> {
        if cache.version != self.version {
            return Err(Error::StaleCache("parameters changed since the forward pass".into()));
        }
        if d_logits.dim() != cache.logits.dim() {
            return Err(Error::shape(
                format!("{:?} loss gradient", cache.logits.dim()),
                format!("{:?}", d_logits.dim()),
            ));
        }
        let mut grads = self.params.zeros_like();
        let mut upstream = Act::Flat(d_logits.to_owned());
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let need = i > 0;
            let off = self.offsets[i];
            let mut put = |k: usize, data: Vec<T>| grads.tensors[off + k].data = data;
            upstream = match (&cache.layers[i], upstream, *layer) {
                (LayerCache::Output { input }, Act::Flat(dz), LayerSpec::Output { .. }) => {
                    let (dh, dw, db) = dense_backward(input.view(), self.p(i, 0).matrix(), dz.view(), need);
                    put(0, into_vec(dw));
                    put(1, into_vec(db));
                    Act::Flat(dh.unwrap_or_default())
                }
                (LayerCache::Dense { input, z, ln, mask }, Act::Flat(dy), LayerSpec::Dense { l2, activation, .. }) => {
                    let mut dn = dy;
                    if let Some(m) = mask {
                        dn *= m;
                    }
                    let da = match ln {
                        Some(c) => {
                            let (da, dg, ds) = layer_norm_backward(dn.view(), c, self.p(i, 2).vector());
                            put(2, into_vec(dg));
                            put(3, into_vec(ds));
                            da
                        }
                        None => dn,
                    };
                    let dz = act_backward(da, z, activation);
                    let (dh, mut dw, db) = dense_backward(input.view(), self.p(i, 0).matrix(), dz.view(), need);
                    if l2 > 0.0 {
                        let two_l2 = T::lit(2.0 * l2);
                        dw.zip_mut_with(&self.p(i, 0).matrix(), |g, &w| *g += two_l2 * w);
                    }
                    put(0, into_vec(dw));
                    put(1, into_vec(db));
                    Act::Flat(dh.unwrap_or_default())
                }
                (LayerCache::Flatten { t, c }, Act::Flat(dy), LayerSpec::Flatten) => {
                    let b = dy.nrows();
                    Act::Seq(dy.into_shape_with_order((b, *t, *c)).expect("unflatten"))
                }
                (LayerCache::Bottleneck { input, z }, Act::Seq(dy), LayerSpec::Bottleneck { activation, .. }) => {
                    let dz = act_backward(dy, z, activation);
                    let (dx, dw, db) = pointwise_backward_batch(input.view(), self.p(i, 0).matrix(), dz.view(), need);
                    put(0, into_vec(dw));
                    put(1, into_vec(db));
                    Act::Seq(dx.unwrap_or_default())
                }
                (LayerCache::Attention(c), Act::Seq(dy), LayerSpec::Attention { kernel_mix, .. }) => {
                    let (dx, g) = attention_backward_batch(c, &self.attention_params(i), kernel_mix, dy.view(), need);
                    put(0, into_vec(g.w_mix));
                    put(1, into_vec(g.b_mix));
                    put(2, into_vec(g.gain));
                    put(3, into_vec(g.shift));
                    put(4, into_vec(g.w1));
                    put(5, into_vec(g.b1));
                    put(6, into_vec(g.w2));
                    put(7, into_vec(g.b2));
                    Act::Seq(dx.unwrap_or_default())
                }
                (
                    LayerCache::Conv { input, z },
                    Act::Seq(dy),
                    LayerSpec::CircConv {
                        kernel,
                        stride,
                        activation,
                        ..
                    },
                ) => {
                    let dz = act_backward(dy, z, activation);
                    let (dx, dw, db) =
                        conv_backward_batch(input.view(), self.p(i, 0).matrix(), dz.view(), kernel, stride, need);
                    put(0, into_vec(dw));
                    put(1, into_vec(db));
                    Act::Seq(dx.unwrap_or_default())
                }
                _ => return Err(Error::StaleCache(format!("cache does not match layer {i}"))),
            };
        }
        Ok(grads)
    }
}

fn into_vec<T: Clone, D: ndarray::Dimension>(a: ndarray::Array<T, D>) -> Vec<T> {
    let a = if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    };
    a.into_raw_vec_and_offset().0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Task;
    use crate::nn::Preset;
    use ndarray::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(t: usize, c: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_array(Array::from_shape_fn((t, c), |_| rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn presets_produce_documented_outputs() {
        let ap1 = Network::<f32>::new(Preset::Ap1.spec(), 0).unwrap();
        let p = ap1.forward(&input(32, 2, 1).cast()).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        let ap10 = Network::<f32>::new(Preset::Ap10.spec(), 0).unwrap();
        assert_eq!(ap10.forward(&input(128, 8, 2).cast()).unwrap().len(), 14);
        assert_eq!(ap10.pre_flatten(&input(128, 8, 2).cast()).unwrap().shape(), (64, 64));
    }

    #[test]
    fn zero_network_is_uniform() {
        let mut net = Network::<f64>::new(Preset::Ap1.spec(), 0).unwrap();
        for p in &mut net.params_mut().tensors {
            if !p.name.ends_with("gain") {
                p.data.fill(0.0);
            }
        }
        let p = net.forward(&input(32, 2, 3)).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = Network::<f64>::new(Preset::Ap2.spec(), 0).unwrap();
        assert!(net.forward(&input(32, 4, 0)).is_err());
    }

    #[test]
    fn stale_cache_is_detected() {
        let mut net = Network::<f64>::new(Preset::Ap2.spec(), 0).unwrap();
        let x = input(32, 2, 4);
        let cache = net.forward_train(x.view().insert_axis(Axis(0)), Mode::Eval).unwrap();
        let d = Array2::ones((1, 5));
        assert!(net.backward(&cache, d.view()).is_ok());
        net.params_mut().tensors[0].data[0] += 1.0;
        assert!(matches!(net.backward(&cache, d.view()), Err(Error::StaleCache(_))));
    }

    #[test]
    fn l2_adds_twice_lambda_weight() {
        let layers = vec![
            LayerSpec::conv(2, 3, 1),
            LayerSpec::bottleneck(2),
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: 3,
                dropout: 0.0,
                l2: 0.25,
                layer_norm: false,
                activation: Activation::Swish,
            },
            LayerSpec::Output {
                units: 2,
                activation: OutputActivation::Linear,
            },
        ];
        let spec = NetworkSpec::new("l2", (4, 1), layers.clone(), Task::Regression);
        let mut plain_layers = layers;
        plain_layers[3] = LayerSpec::Dense {
            units: 3,
            dropout: 0.0,
            l2: 0.0,
            layer_norm: false,
            activation: Activation::Swish,
        };
        let plain_spec = NetworkSpec::new("l2", (4, 1), plain_layers, Task::Regression);
        let net = Network::<f64>::new(spec, 8).unwrap();
        let plain = Network::<f64>::with_params(plain_spec, net.params().clone()).unwrap();
        let x = input(4, 1, 5);
        let d = Array2::from_elem((1, 2), 0.5);
        let g = net
            .backward(
                &net.forward_train(x.view().insert_axis(Axis(0)), Mode::Eval).unwrap(),
                d.view(),
            )
            .unwrap();
        let g0 = plain
            .backward(
                &plain.forward_train(x.view().insert_axis(Axis(0)), Mode::Eval).unwrap(),
                d.view(),
            )
            .unwrap();
        let w = &net.params().tensors[4];
        assert!(w.name.ends_with("dense.weight"));
        for ((a, b), wv) in g.tensors[4].data.iter().zip(&g0.tensors[4].data).zip(&w.data) {
            assert!((a - b - 0.5 * wv).abs() < 1e-15);
        }
        let ss: f64 = w.data.iter().map(|v| v * v).sum();
        assert!((net.l2_penalty() - 0.25 * ss).abs() < 1e-15);
    }
}
