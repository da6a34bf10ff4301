//! Batch-wise power normalization `x = (b - mu) / gamma`.
//!
//! `mu` and `gamma` are the mean and population standard deviation over
//! all `B * N` code symbols of a batch, which puts the batch on the sphere of
//! radius `sqrt(B * N)`. At test time frozen statistics are applied instead.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats<T> {
    pub mu: T,
    pub gamma: T,
}

impl<T: Scalar> NormStats<T> {
    pub fn new(mu: T, gamma: T) -> Result<Self> {
        if !(gamma > T::zero() && gamma.is_finite() && mu.is_finite()) {
            return Err(Error::invalid(format!(
                "invalid normalization stats mu={mu}, gamma={gamma}"
            )));
        }
        Ok(NormStats { mu, gamma })
    }

    pub fn apply(&self, b: &mut [T]) {
        let inv = T::one() / self.gamma;
        for v in b.iter_mut() {
            *v = (*v - self.mu) * inv;
        }
    }

    pub fn cast<U: Scalar>(&self) -> NormStats<U> {
        NormStats {
            mu: U::of(self.mu.as_f64()),
            gamma: U::of(self.gamma.as_f64()),
        }
    }
}

/// Mean and population standard deviation, accumulated in `f64`.
pub fn batch_statistics<T: Scalar>(b: &[T]) -> Result<NormStats<T>> {
    if b.len() < 2 {
        return Err(Error::DegenerateBatch(format!(
            "{} symbols, need at least 2",
            b.len()
        )));
    }
    let n = b.len() as f64;
    let mean = b.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = b.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
    if !var.is_finite() || !mean.is_finite() {
        return Err(Error::DegenerateBatch("non-finite encoder output".into()));
    }
    if var <= 0.0 || T::of(var.sqrt()) <= T::zero() {
        return Err(Error::DegenerateBatch(
            "zero variance across the batch".into(),
        ));
    }
    NormStats::new(T::of(mean), T::of(var.sqrt()))
}

/// Normalizes all symbols of a batch jointly and returns the statistics used.
pub fn normalize_batch<T: Scalar>(b: &mut [T]) -> Result<NormStats<T>> {
    let stats = batch_statistics(b)?;
    stats.apply(b);
    Ok(stats)
}

/// Gradient through batch normalization given the normalized output `x`:
/// `db = (g - mean(g) - x * mean(g * x)) / gamma`.
pub(crate) fn normalize_backward<T: Scalar>(
    grad: ArrayView2<'_, T>,
    x: ArrayView2<'_, T>,
    gamma: T,
) -> Array2<T> {
    let n = T::of(grad.len() as f64);
    let mean_g = grad.sum() / n;
    let mean_gx = (&grad * &x).sum() / n;
    let inv = T::one() / gamma;
    let mut out = grad.to_owned();
    out.zip_mut_with(&x, |g, &xv| *g = (*g - mean_g - xv * mean_gx) * inv);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_example() {
        let mut b = vec![1.0f64, -1.0, 3.0, -3.0];
        let s = normalize_batch(&mut b).unwrap();
        assert_eq!(s.mu, 0.0);
        assert!((s.gamma - 5f64.sqrt()).abs() < 1e-12);
        let want = [
            0.447_213_595_5,
            -0.447_213_595_5,
            1.341_640_786_5,
            -1.341_640_786_5,
        ];
        for (g, w) in b.iter().zip(want) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn idempotent_on_normalized_data() {
        let mut b = vec![1.0f64, -1.0, 1.0, -1.0];
        let s = normalize_batch(&mut b).unwrap();
        assert_eq!((s.mu, s.gamma), (0.0, 1.0));
        assert_eq!(b, vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            normalize_batch(&mut [2.0f32; 10]),
            Err(Error::DegenerateBatch(_))
        ));
        assert!(matches!(
            normalize_batch(&mut [1.0f32]),
            Err(Error::DegenerateBatch(_))
        ));
        assert!(NormStats::new(0.0, 0.0).is_err());
    }

    #[test]
    fn sphere_radius_in_single_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut b: Vec<f32> = (0..3000).map(|_| rng.random_range(-4.0..9.0)).collect();
        normalize_batch(&mut b).unwrap();
        let n = b.len() as f64;
        let ss: f64 = b.iter().map(|&v| (v as f64).powi(2)).sum();
        let mean: f64 = b.iter().map(|&v| v as f64).sum::<f64>() / n;
        assert!((ss / n - 1.0).abs() < 1e-3);
        assert!(mean.abs() < 1e-6);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = Array2::from_shape_fn((3, 5), |_| rng.random_range(-2.0..2.0f64));
        let w = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0f64));
        let f = |b: &Array2<f64>| {
            let mut x = b.clone();
            normalize_batch(x.as_slice_mut().unwrap()).unwrap();
            (&x * &w).sum()
        };
        let mut x = b.clone();
        let s = normalize_batch(x.as_slice_mut().unwrap()).unwrap();
        let db = normalize_backward(w.view(), x.view(), s.gamma);
        let h = 1e-6;
        for idx in [(0, 0), (1, 3), (2, 4)] {
            let mut p = b.clone();
            p[idx] += h;
            let mut m = b.clone();
            m[idx] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - db[idx]).abs() < 1e-8);
        }
    }
}
