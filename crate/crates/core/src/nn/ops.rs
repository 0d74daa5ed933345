//! Layer primitives with explicit forward and backward passes.
//!
//! Batched functions take activations as `(batch, angles, channels)` arrays in
//! standard layout; dense-head functions take `(batch, features)`.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::{Rng, RngCore};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// LayerNorm variance offset.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// `φ(z) = z σ(z)`.
#[inline]
pub fn swish<T: Scalar>(z: T) -> T {
    z * sigmoid(z)
}

/// `φ'(z) = σ(z)(1 + z(1 − σ(z)))`.
#[inline]
pub fn swish_grad<T: Scalar>(z: T) -> T {
    let s = sigmoid(z);
    s * (T::one() + z * (T::one() - s))
}

#[inline]
pub fn swish_backward<T: Scalar>(z: T, upstream: T) -> T {
    upstream * swish_grad(z)
}

/// `(P_left, P_right)` for kernel size `k`.
pub fn pad_amounts(k: usize) -> (usize, usize) {
    let left = (k.saturating_sub(1)) / 2;
    (left, k.saturating_sub(1) - left)
}

/// Output angular length of a strided circular convolution: `⌈T/S⌉`.
pub fn conv_output_len(t: usize, stride: usize) -> usize {
    t.div_ceil(stride)
}

/// Periodic wrap-around padding: row `j` of the output is
/// `x[(j − P_left) mod T]`.
pub fn circular_pad<T: Scalar>(x: ArrayView2<'_, T>, k: usize) -> Array2<T> {
    let (t, c) = x.dim();
    let (left, _) = pad_amounts(k);
    let rows = t + k.max(1) - 1;
    Array2::from_shape_fn((rows, c), |(j, ch)| x[(wrap(j, left, t), ch)])
}

#[inline]
fn wrap(j: usize, left: usize, t: usize) -> usize {
    (j + t * (left / t + 1) - left) % t
}

/// Gathers every stride-`s` window of the circularly padded input into one
/// row: output row `b·T_out + i` holds `x̃[b, iS .. iS+K, :]` flattened
/// kernel-major.
pub fn im2col<T: Scalar>(x: ArrayView3<'_, T>, k: usize, stride: usize) -> Array2<T> {
    let (b, t, c) = x.dim();
    let t_out = conv_output_len(t, stride);
    let (left, _) = pad_amounts(k);
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let row_len = k * c;
    let mut out = vec![T::zero(); b * t_out * row_len];
    for bi in 0..b {
        let sample = &src[bi * t * c..(bi + 1) * t * c];
        for i in 0..t_out {
            let dst = &mut out[(bi * t_out + i) * row_len..(bi * t_out + i + 1) * row_len];
            for kk in 0..k {
                let r = wrap(i * stride + kk, left, t);
                dst[kk * c..(kk + 1) * c].copy_from_slice(&sample[r * c..(r + 1) * c]);
            }
        }
    }
    Array2::from_shape_vec((b * t_out, row_len), out).expect("im2col shape")
}

/// Adjoint of [`im2col`]: scatters window gradients back onto input
/// positions, summing wrapped contributions.
pub fn col2im<T: Scalar>(cols: ArrayView2<'_, T>, dims: (usize, usize, usize), k: usize, stride: usize) -> Array3<T> {
    let (b, t, c) = dims;
    let t_out = conv_output_len(t, stride);
    let (left, _) = pad_amounts(k);
    let cols = cols.as_standard_layout();
    let src = cols.as_slice().expect("standard layout");
    let row_len = k * c;
    let mut out = vec![T::zero(); b * t * c];
    for bi in 0..b {
        let sample = &mut out[bi * t * c..(bi + 1) * t * c];
        for i in 0..t_out {
            let row = &src[(bi * t_out + i) * row_len..(bi * t_out + i + 1) * row_len];
            for kk in 0..k {
                let r = wrap(i * stride + kk, left, t);
                for (d, &v) in sample[r * c..(r + 1) * c].iter_mut().zip(&row[kk * c..(kk + 1) * c]) {
                    *d += v;
                }
            }
        }
    }
    Array3::from_shape_vec((b, t, c), out).expect("col2im shape")
}

/// Batched circular convolution without activation.
/// `weight` is `(filters, K·C_in)`, each row a kernel-major `K × C_in` block.
pub fn conv_forward_batch<T: Scalar>(
    x: ArrayView3<'_, T>,
    weight: ArrayView2<'_, T>,
    bias: ArrayView1<'_, T>,
    k: usize,
    stride: usize,
) -> Array3<T> {
    let (b, t, _) = x.dim();
    let t_out = conv_output_len(t, stride);
    let cols = im2col(x, k, stride);
    let mut z = cols.dot(&weight.t());
    z += &bias;
    let nf = weight.nrows();
    z.into_shape_with_order((b, t_out, nf)).expect("conv output shape")
}

/// Gradients of [`conv_forward_batch`] given `dz` (same shape as its output).
/// Returns `(dx, d_weight, d_bias)`; `dx` is skipped when `need_input_grad`
/// is false.
pub fn conv_backward_batch<T: Scalar>(
    x: ArrayView3<'_, T>,
    weight: ArrayView2<'_, T>,
    dz: ArrayView3<'_, T>,
    k: usize,
    stride: usize,
    need_input_grad: bool,
) -> (Option<Array3<T>>, Array2<T>, Array1<T>) {
    let (b, t_out, nf) = dz.dim();
    let cols = im2col(x, k, stride);
    let dz = dz.as_standard_layout();
    let dz2 = dz.view().into_shape_with_order((b * t_out, nf)).expect("dz shape");
    let dw = dz2.t().dot(&cols);
    let db = dz2.sum_axis(Axis(0));
    let dx = need_input_grad.then(|| {
        let dcols = dz2.dot(&weight);
        col2im(dcols.view(), x.dim(), k, stride)
    });
    (dx, dw, db)
}

/// Single-tensor circular convolution `Y[i, j] = Σ_k Σ_c W[j,k,c] x̃[iS+k, c] + b[j]`
/// with `W` shaped `(filters, K, C_in)`.
pub fn circular_conv_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: ArrayView3<'_, T>,
    bias: ArrayView1<'_, T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (t, c) = x.shape();
    let (nf, k, c_in) = weight.dim();
    if c_in != c || bias.len() != nf || stride == 0 || t == 0 {
        return Err(Error::shape(
            format!("input with {c_in} channels, {nf} biases, stride ≥ 1"),
            format!("{t}x{c} input, {} biases, stride {stride}", bias.len()),
        ));
    }
    let w = weight.as_standard_layout();
    let w2 = w.view().into_shape_with_order((nf, k * c)).expect("weight reshape");
    let x3 = x.view().insert_axis(Axis(0));
    let y = conv_forward_batch(x3, w2, bias, k, stride);
    Ok(Tensor::from_array(y.index_axis_move(Axis(0), 0)))
}

/// Row-wise layer normalization cache.
#[derive(Clone, Debug)]
pub struct LayerNormCache<T> {
    pub xhat: Array2<T>,
    pub inv_std: Array1<T>,
}

/// Normalizes every row over its columns, then applies `gain`/`shift`.
pub fn layer_norm_forward<T: Scalar>(
    x: ArrayView2<'_, T>,
    gain: ArrayView1<'_, T>,
    shift: ArrayView1<'_, T>,
) -> (Array2<T>, LayerNormCache<T>) {
    let (rows, n) = x.dim();
    let nf = T::lit(n as f64);
    let eps = T::lit(LAYER_NORM_EPS);
    let mut xhat = Array2::zeros((rows, n));
    let mut inv_std = Array1::zeros(rows);
    let mut y = Array2::zeros((rows, n));
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / nf;
        let var = row.fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / nf;
        let is = T::one() / (var + eps).sqrt();
        inv_std[r] = is;
        let mut xh = xhat.row_mut(r);
        let mut yr = y.row_mut(r);
        for j in 0..n {
            let h = (row[j] - mean) * is;
            xh[j] = h;
            yr[j] = gain[j] * h + shift[j];
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}

/// Returns `(dx, d_gain, d_shift)`.
pub fn layer_norm_backward<T: Scalar>(
    dy: ArrayView2<'_, T>,
    cache: &LayerNormCache<T>,
    gain: ArrayView1<'_, T>,
) -> (Array2<T>, Array1<T>, Array1<T>) {
    let (rows, n) = dy.dim();
    let nf = T::lit(n as f64);
    let mut dx = Array2::zeros((rows, n));
    let mut dgain = Array1::zeros(n);
    let mut dshift = Array1::zeros(n);
    let mut dxh = vec![T::zero(); n];
    for r in 0..rows {
        let (dyr, xh) = (dy.row(r), cache.xhat.row(r));
        let (mut m1, mut m2) = (T::zero(), T::zero());
        for j in 0..n {
            let g = dyr[j] * gain[j];
            dxh[j] = g;
            m1 += g;
            m2 += g * xh[j];
            dgain[j] += dyr[j] * xh[j];
            dshift[j] += dyr[j];
        }
        m1 /= nf;
        m2 /= nf;
        let is = cache.inv_std[r];
        let mut out = dx.row_mut(r);
        for j in 0..n {
            out[j] = is * (dxh[j] - m1 - xh[j] * m2);
        }
    }
    (dx, dgain, dshift)
}

/// Dropout behaviour for one forward pass.
pub enum DropoutMode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

/// Inverted dropout. In training each entry is zeroed with probability `p`
/// and survivors are scaled by `1/(1−p)`; evaluation is the identity.
/// Returns the output and, when a mask was drawn, the mask.
pub fn dropout_forward<T: Scalar>(
    h: ArrayView2<'_, T>,
    p: f64,
    mode: DropoutMode<'_>,
) -> Result<(Array2<T>, Option<Array2<T>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Spec(format!("dropout rate {p} outside [0, 1)")));
    }
    match mode {
        DropoutMode::Train(rng) if p > 0.0 => {
            let keep = T::lit(1.0 / (1.0 - p));
            let mask = Array2::from_shape_fn(h.dim(), |_| if rng.random::<f64>() < p { T::zero() } else { keep });
            Ok((&h * &mask, Some(mask)))
        }
        _ => Ok((h.to_owned(), None)),
    }
}

/// `h Wᵀ + b` with `W` shaped `(out, in)`.
pub fn dense_forward<T: Scalar>(h: ArrayView2<'_, T>, w: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Array2<T> {
    let mut z = h.dot(&w.t());
    z += &b;
    z
}

/// Returns `(dh, dW, db)`; `dh` only when requested.
pub fn dense_backward<T: Scalar>(
    h: ArrayView2<'_, T>,
    w: ArrayView2<'_, T>,
    dz: ArrayView2<'_, T>,
    need_input_grad: bool,
) -> (Option<Array2<T>>, Array2<T>, Array1<T>) {
    let dw = dz.t().dot(&h);
    let db = dz.sum_axis(Axis(0));
    (need_input_grad.then(|| dz.dot(&w)), dw, db)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(z: ArrayView2<'_, T>) -> Array2<T> {
    let mut out = z.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(T::neg_infinity(), |a, &v| a.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

pub fn softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let a = ArrayView2::from_shape((1, v.len()), v).expect("row view");
    softmax_rows(a).into_raw_vec_and_offset().0
}

/// Channel-attention parameters as views. Weight layouts: `w_mix` is
/// `(C, K_mix·C)` kernel-major, `w1` is `(C/r, C)`, `w2` is `(C, C/r)`.
pub struct AttentionParams<'a, T> {
    pub w_mix: ArrayView2<'a, T>,
    pub b_mix: ArrayView1<'a, T>,
    pub gain: ArrayView1<'a, T>,
    pub shift: ArrayView1<'a, T>,
    pub w1: ArrayView2<'a, T>,
    pub b1: ArrayView1<'a, T>,
    pub w2: ArrayView2<'a, T>,
    pub b2: ArrayView1<'a, T>,
}

#[derive(Clone, Debug)]
pub struct AttentionCache<T> {
    pub input: Array3<T>,
    pub z_mix: Array3<T>,
    pub ln: LayerNormCache<T>,
    pub normed: Array3<T>,
    pub pooled: Array2<T>,
    pub u: Array2<T>,
    pub weights: Array2<T>,
}

pub struct AttentionGrads<T> {
    pub w_mix: Array2<T>,
    pub b_mix: Array1<T>,
    pub gain: Array1<T>,
    pub shift: Array1<T>,
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

/// Spatial mixing (stride-1 circular conv + Swish), per-position LayerNorm
/// over channels, global average pooling over angles, then a sigmoid-gated
/// bottleneck MLP whose output rescales each channel.
pub fn attention_forward_batch<T: Scalar>(
    x: ArrayView3<'_, T>,
    p: &AttentionParams<'_, T>,
    k_mix: usize,
) -> (Array3<T>, AttentionCache<T>) {
    let (b, t, c) = x.dim();
    let z_mix = conv_forward_batch(x, p.w_mix, p.b_mix, k_mix, 1);
    let mixed = z_mix.mapv(swish);
    let flat = mixed.view().into_shape_with_order((b * t, c)).expect("mix rows");
    let (normed, ln) = layer_norm_forward(flat, p.gain, p.shift);
    let normed = normed.into_shape_with_order((b, t, c)).expect("norm shape");
    let pooled = normed.mean_axis(Axis(1)).expect("non-empty angular axis");
    let u = dense_forward(pooled.view(), p.w1, p.b1);
    let v = u.mapv(swish);
    let weights = dense_forward(v.view(), p.w2, p.b2).mapv(sigmoid);
    let mut out = normed.clone();
    for (mut sample, a) in out.outer_iter_mut().zip(weights.outer_iter()) {
        sample *= &a;
    }
    let cache = AttentionCache {
        input: x.to_owned(),
        z_mix,
        ln,
        normed,
        pooled,
        u,
        weights,
    };
    (out, cache)
}

pub fn attention_backward_batch<T: Scalar>(
    cache: &AttentionCache<T>,
    p: &AttentionParams<'_, T>,
    k_mix: usize,
    dout: ArrayView3<'_, T>,
    need_input_grad: bool,
) -> (Option<Array3<T>>, AttentionGrads<T>) {
    let (b, t, c) = dout.dim();
    let a = &cache.weights;
    // d/da of Σ out = normed ⊙ a
    let da = (&dout * &cache.normed).sum_axis(Axis(1));
    let mut dnormed = dout.to_owned();
    for (mut sample, ar) in dnormed.outer_iter_mut().zip(a.outer_iter()) {
        sample *= &ar;
    }
    let ds = &da * &a.mapv(|v| v * (T::one() - v));
    let v = cache.u.mapv(swish);
    let (dv, dw2, db2) = dense_backward(v.view(), p.w2, ds.view(), true);
    let du = dv.expect("requested") * &cache.u.mapv(swish_grad);
    let (dg, dw1, db1) = dense_backward(cache.pooled.view(), p.w1, du.view(), true);
    let dg = dg.expect("requested") / T::lit(t as f64);
    for (mut sample, g) in dnormed.outer_iter_mut().zip(dg.outer_iter()) {
        sample += &g;
    }
    let dflat = dnormed.view().into_shape_with_order((b * t, c)).expect("rows");
    let (dmixed, dgain, dshift) = layer_norm_backward(dflat, &cache.ln, p.gain);
    let dmixed = dmixed.into_shape_with_order((b, t, c)).expect("shape");
    let dz = dmixed * &cache.z_mix.mapv(swish_grad);
    let (dx, dw_mix, db_mix) = conv_backward_batch(cache.input.view(), p.w_mix, dz.view(), k_mix, 1, need_input_grad);
    (
        dx,
        AttentionGrads {
            w_mix: dw_mix,
            b_mix: db_mix,
            gain: dgain,
            shift: dshift,
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
        },
    )
}

/// Single-tensor attention; returns the attended features and the channel
/// weights `a`.
pub fn attention_forward<T: Scalar>(
    h: &Tensor<T>,
    p: &AttentionParams<'_, T>,
    k_mix: usize,
    reduction: usize,
) -> Result<(Tensor<T>, Vec<T>)> {
    let (_, c) = h.shape();
    if reduction == 0 || c % reduction != 0 {
        return Err(Error::Spec(format!(
            "{c} channels not divisible by reduction {reduction}"
        )));
    }
    if p.w_mix.dim() != (c, k_mix * c) || p.w1.dim() != (c / reduction, c) || p.w2.dim() != (c, c / reduction) {
        return Err(Error::Spec("attention parameter shapes do not match the input".into()));
    }
    let (out, cache) = attention_forward_batch(h.view().insert_axis(Axis(0)), p, k_mix);
    Ok((
        Tensor::from_array(out.index_axis_move(Axis(0), 0)),
        cache.weights.row(0).to_vec(),
    ))
}

/// Pointwise (1×1) convolution `H W + b` applied at every angular position,
/// before activation. `w` is `(C, N_b)`.
pub fn pointwise_forward_batch<T: Scalar>(
    x: ArrayView3<'_, T>,
    w: ArrayView2<'_, T>,
    b: ArrayView1<'_, T>,
) -> Array3<T> {
    let (bs, t, c) = x.dim();
    let x = x.as_standard_layout();
    let rows = x.view().into_shape_with_order((bs * t, c)).expect("rows");
    let mut z = rows.dot(&w);
    z += &b;
    z.into_shape_with_order((bs, t, w.ncols())).expect("shape")
}

pub fn pointwise_backward_batch<T: Scalar>(
    x: ArrayView3<'_, T>,
    w: ArrayView2<'_, T>,
    dz: ArrayView3<'_, T>,
    need_input_grad: bool,
) -> (Option<Array3<T>>, Array2<T>, Array1<T>) {
    let (bs, t, c) = x.dim();
    let x = x.as_standard_layout();
    let rows = x.view().into_shape_with_order((bs * t, c)).expect("rows");
    let dz = dz.as_standard_layout();
    let dz2 = dz.view().into_shape_with_order((bs * t, w.ncols())).expect("rows");
    let dw = rows.t().dot(&dz2);
    let db = dz2.sum_axis(Axis(0));
    let dx = need_input_grad.then(|| dz2.dot(&w.t()).into_shape_with_order((bs, t, c)).expect("shape"));
    (dx, dw, db)
}

/// Bottleneck layer: `φ(H W + b)` per position.
pub fn bottleneck_forward<T: Scalar>(h: &Tensor<T>, w: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Result<Tensor<T>> {
    let (_, c) = h.shape();
    if w.nrows() != c || b.len() != w.ncols() {
        return Err(Error::shape(format!("({c}, N_b) weight"), format!("{:?}", w.dim())));
    }
    let z = pointwise_forward_batch(h.view().insert_axis(Axis(0)), w, b);
    Ok(Tensor::from_array(z.index_axis_move(Axis(0), 0).mapv(swish)))
}

/// Average of a batch over the leading axis, used for diagnostics.
pub fn row_slice<T: Scalar>(a: &Array2<T>, r: usize) -> ArrayView1<'_, T> {
    a.slice(s![r, ..])
}
