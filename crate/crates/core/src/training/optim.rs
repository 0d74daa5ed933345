use crate::error::Result;
use crate::nn::Parameters;
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-7;

/// Global-norm clipping: when `‖g‖₂ > γ` every array is scaled by `γ/‖g‖₂`.
/// Returns the norm before clipping.
pub fn clip_gradients<T: Scalar>(grads: &mut Parameters<T>, gamma: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > gamma && norm.is_finite() {
        grads.scale(T::lit(gamma / norm));
    }
    norm
}

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Parameters<T>,
    pub v: Parameters<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update:
    /// `m ← β1 m + (1−β1) g`, `v ← β2 v + (1−β2) g²`,
    /// `θ ← θ − α m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, params: &mut Parameters<T>, grads: &Parameters<T>, lr: f64) -> Result<()> {
        params.check_layout(grads)?;
        params.check_layout(&self.m)?;
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::lit(1.0 - ADAM_BETA1.powi(t));
        let bc2 = T::lit(1.0 - ADAM_BETA2.powi(t));
        let lr = T::lit(lr);
        let eps = T::lit(ADAM_EPS);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for (((pv, &gv), mv), vv) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                *mv = b1 * *mv + c1 * gv;
                *vv = b2 * *vv + c2 * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
