use serde::{Deserialize, Serialize};

use crate::neural_codec::{Codec, Part};
use crate::scalar::Scalar;

/// Adam hyperparameters and step counter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
}

impl AdamParams {
    pub fn new(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
        }
    }
}

/// Adam over the parameters of one network of a codec.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub params: AdamParams,
    pub(crate) m: Vec<T>,
    pub(crate) v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, size: usize) -> Self {
        Adam {
            params: AdamParams::new(lr),
            m: vec![T::zero(); size],
            v: vec![T::zero(); size],
        }
    }

    pub fn from_parts(params: AdamParams, m: Vec<T>, v: Vec<T>) -> Self {
        Adam { params, m, v }
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.m, &self.v)
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.params.lr = lr;
    }

    /// One bias-corrected update using the gradients stored in `codec`.
    pub fn step(&mut self, codec: &mut Codec<T>, part: Part) {
        assert_eq!(
            self.m.len(),
            codec.parameter_count(part),
            "optimizer sized for another network"
        );
        self.params.steps += 1;
        let p = self.params;
        let t = p.steps as i32;
        let (b1, b2) = (T::of(p.beta1), T::of(p.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let c1 = T::of(1.0 - p.beta1.powi(t));
        let c2 = T::of(1.0 - p.beta2.powi(t));
        let (lr, eps) = (T::of(p.lr), T::of(p.eps));
        let mut offset = 0;
        let (m, v) = (&mut self.m, &mut self.v);
        codec.visit_params_mut(part, &mut |values, grads| {
            let n = values.len();
            let ms = &mut m[offset..offset + n];
            let vs = &mut v[offset..offset + n];
            for (((w, &g), mi), vi) in values.iter_mut().zip(grads.iter()).zip(ms).zip(vs) {
                *mi = b1 * *mi + one_b1 * g;
                *vi = b2 * *vi + one_b2 * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            offset += n;
        });
    }
}
