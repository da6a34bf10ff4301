//! Min-over-list binary cross-entropy.
//!
//! The loss of a candidate list is the smallest average BCE between any
//! candidate and the transmitted word. Only the minimizing row receives
//! gradient; exact ties resolve to the lowest row index.
//!
//! Two entry points exist: the probability domain (candidates in `(0, 1)`,
//! clamped to `[eps, 1 - eps]`) and the logit domain used during training,
//! where `bce(sigmoid(z), u) = softplus(z) - u z` stays finite for
//! saturated logits.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default clamp inside the logarithms.
pub const CLAMP_EPS: f64 = 1e-12;

/// Clamp actually used for scalar type `T`: `1e-12`, or the machine epsilon
/// when `1 - 1e-12` is not representable.
pub fn clamp_eps<T: Scalar>() -> T {
    T::of(CLAMP_EPS).max(T::epsilon())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue<T> {
    pub value: T,
    /// Zero-based row of the minimizing candidate.
    pub index: usize,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!(
            "candidate length {a} != message length {b}"
        )));
    }
    if a == 0 {
        return Err(Error::invalid("empty candidate"));
    }
    Ok(())
}

fn target<T: Scalar>(u: u8) -> T {
    if u == 0 {
        T::zero()
    } else {
        T::one()
    }
}

/// Average BCE `-(1/K) sum u log c + (1 - u) log(1 - c)` with clamping.
pub fn bce_avg<T: Scalar>(candidate: &[T], u: &[u8]) -> Result<T> {
    check_lengths(candidate.len(), u.len())?;
    let eps = clamp_eps::<T>();
    let hi = T::one() - eps;
    let sum: T = candidate
        .iter()
        .zip(u)
        .map(|(&c, &b)| {
            let c = c.max(eps).min(hi);
            if b == 0 {
                -(T::one() - c).ln()
            } else {
                -c.ln()
            }
        })
        .sum();
    Ok(sum / T::of(u.len() as f64))
}

/// Gradient of [`bce_avg`] w.r.t. the candidate entries (zero where clamped).
pub fn bce_avg_grad<T: Scalar>(candidate: &[T], u: &[u8]) -> Result<Vec<T>> {
    check_lengths(candidate.len(), u.len())?;
    let eps = clamp_eps::<T>();
    let hi = T::one() - eps;
    let k = T::of(u.len() as f64);
    Ok(candidate
        .iter()
        .zip(u)
        .map(|(&c, &b)| {
            if c < eps || c > hi {
                T::zero()
            } else if b == 0 {
                T::one() / ((T::one() - c) * k)
            } else {
                -T::one() / (c * k)
            }
        })
        .collect())
}

fn argmin<T: Scalar>(values: impl Iterator<Item = T>) -> Option<LossValue<T>> {
    values.enumerate().fold(None, |best, (i, v)| match best {
        // NaN wins so divergence is never masked by a finite row
        Some(b) if b.value.is_nan() || !(v < b.value || v.is_nan()) => Some(b),
        _ => Some(LossValue { value: v, index: i }),
    })
}

/// `min_l bce_avg(row_l, u)` over an `L x K` candidate matrix.
pub fn list_loss<T: Scalar>(candidates: ArrayView2<'_, T>, u: &[u8]) -> Result<LossValue<T>> {
    if candidates.nrows() == 0 {
        return Err(Error::invalid("empty candidate list"));
    }
    let mut losses = Vec::with_capacity(candidates.nrows());
    for row in candidates.outer_iter() {
        losses.push(bce_avg(&row.to_vec(), u)?);
    }
    Ok(argmin(losses.into_iter()).expect("non-empty"))
}

/// [`list_loss`] and its gradient w.r.t. every candidate entry.
pub fn list_loss_grad<T: Scalar>(
    candidates: ArrayView2<'_, T>,
    u: &[u8],
) -> Result<(LossValue<T>, Array2<T>)> {
    let loss = list_loss(candidates, u)?;
    let mut grad = Array2::zeros(candidates.raw_dim());
    let g = bce_avg_grad(&candidates.row(loss.index).to_vec(), u)?;
    grad.row_mut(loss.index).assign(&ndarray::Array1::from(g));
    Ok((loss, grad))
}

fn check_batch(b1: usize, b2: usize) -> Result<()> {
    if b1 != b2 {
        return Err(Error::invalid(format!(
            "{b1} candidate lists for {b2} messages"
        )));
    }
    if b1 == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

/// Mean of per-example [`list_loss`] over a `(B, L, K)` batch.
pub fn batch_list_loss<T: Scalar>(
    candidates: ArrayView3<'_, T>,
    messages: ArrayView2<'_, u8>,
) -> Result<T> {
    check_batch(candidates.shape()[0], messages.nrows())?;
    let mut total = T::zero();
    for (c, u) in candidates.outer_iter().zip(messages.outer_iter()) {
        total += list_loss(c, &u.to_vec())?.value;
    }
    Ok(total / T::of(messages.nrows() as f64))
}

pub fn batch_list_loss_grad<T: Scalar>(
    candidates: ArrayView3<'_, T>,
    messages: ArrayView2<'_, u8>,
) -> Result<(T, Array3<T>)> {
    check_batch(candidates.shape()[0], messages.nrows())?;
    let b = T::of(messages.nrows() as f64);
    let mut grad = Array3::zeros(candidates.raw_dim());
    let mut total = T::zero();
    for ((c, u), mut g) in candidates
        .outer_iter()
        .zip(messages.outer_iter())
        .zip(grad.outer_iter_mut())
    {
        let (loss, gi) = list_loss_grad(c, &u.to_vec())?;
        total += loss.value;
        g.assign(&(gi / b));
    }
    Ok((total / b, grad))
}

/// `log(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Average BCE of `sigmoid(z)` against `u`, computed from logits.
pub fn bce_avg_logits<T: Scalar>(logits: &[T], u: &[u8]) -> Result<T> {
    check_lengths(logits.len(), u.len())?;
    let sum: T = logits
        .iter()
        .zip(u)
        .map(|(&z, &b)| softplus(z) - target::<T>(b) * z)
        .sum();
    Ok(sum / T::of(u.len() as f64))
}

/// Logit bound equivalent to clamping probabilities to `[eps, 1 - eps]`.
pub fn logit_bound(eps: f64) -> f64 {
    ((1.0 - eps) / eps).ln()
}

/// Batch loss on a channel-major logit matrix `(L, B * K)`, with logits
/// clamped to `[-bound, bound]`. When `grad` is given it receives
/// `d loss / d logits`, non-zero only on argmin rows.
pub(crate) fn batch_list_loss_logits<T: Scalar>(
    logits: ArrayView2<'_, T>,
    messages: ArrayView2<'_, u8>,
    bound: T,
    mut grad: Option<&mut Array2<T>>,
) -> Result<T> {
    let (batch, k) = messages.dim();
    check_batch(logits.ncols() / k.max(1), batch)?;
    if logits.ncols() != batch * k || logits.nrows() == 0 {
        return Err(Error::invalid(
            "logit matrix does not match the message batch",
        ));
    }
    let scale = T::one() / T::of((batch * k) as f64);
    let mut total = T::zero();
    for (b, u) in messages.outer_iter().enumerate() {
        let u = u.to_slice().expect("standard layout");
        let cols = b * k..(b + 1) * k;
        let best = argmin(logits.outer_iter().map(|row| {
            let z = &row.to_slice().expect("standard layout")[cols.clone()];
            z.iter()
                .zip(u)
                .map(|(&z, &t)| {
                    let z = if z > bound {
                        bound
                    } else if z < -bound {
                        -bound
                    } else {
                        z
                    };
                    softplus(z) - target::<T>(t) * z
                })
                .sum::<T>()
        }))
        .expect("non-empty list");
        total += best.value;
        if let Some(g) = grad.as_deref_mut() {
            let z = logits.row(best.index);
            let z = &z.to_slice().expect("standard layout")[cols.clone()];
            let mut grow = g.row_mut(best.index);
            let gs = &mut grow.as_slice_mut().expect("standard layout")[cols];
            for ((gv, &zv), &t) in gs.iter_mut().zip(z).zip(u) {
                *gv = if zv.abs() > bound {
                    T::zero()
                } else {
                    (sigmoid(zv) - target::<T>(t)) * scale
                };
            }
        }
    }
    Ok(total * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight summation with explicit clamping, kept separate from the library path.
    fn naive_bce(c: &[f64], u: &[u8]) -> f64 {
        let mut s = 0.0;
        for i in 0..c.len() {
            let p = c[i].clamp(1e-12, 1.0 - 1e-12);
            let t = u[i] as f64;
            s += -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
        }
        s / c.len() as f64
    }

    #[test]
    fn uniform_candidate_costs_ln2() {
        let v = bce_avg(&[0.5f64, 0.5], &[1, 0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let v = bce_avg(&[1.0f64, 0.0, 1.0], &[1, 0, 1]).unwrap();
        assert!((0.0..=1e-11).contains(&v));
        let v32 = bce_avg(&[1.0f32, 0.0], &[1, 0]).unwrap();
        assert!(v32.is_finite() && v32 >= 0.0);
    }

    #[test]
    fn bce_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let k = rng.random_range(1..64);
            let c: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let u: Vec<u8> = (0..k).map(|_| rng.random_range(0..2)).collect();
            assert!((bce_avg(&c, &u).unwrap() - naive_bce(&c, &u)).abs() < 1e-9);
        }
    }

    #[test]
    fn list_loss_picks_minimum() {
        // per-row losses arranged so that the second row wins
        let u = [1u8];
        let p = |l: f64| (-l).exp();
        let c = array![[p(0.69)], [p(0.02)], [p(0.40)]];
        let loss = list_loss(c.view(), &u).unwrap();
        assert_eq!(loss.index, 1);
        assert!((loss.value - 0.02).abs() < 1e-12);
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let c = array![[0.3f64, 0.6], [0.3, 0.6]];
        assert_eq!(list_loss(c.view(), &[1, 0]).unwrap().index, 0);
    }

    #[test]
    fn single_row_equals_plain_bce_and_duplicates_are_neutral() {
        let c = array![[0.2f64, 0.9, 0.4]];
        let u = [0u8, 1, 1];
        let single = list_loss(c.view(), &u).unwrap().value;
        assert_eq!(single, bce_avg(&[0.2, 0.9, 0.4], &u).unwrap());
        let dup = ndarray::concatenate(Axis(0), &[c.view(), c.view(), c.view()]).unwrap();
        assert_eq!(list_loss(dup.view(), &u).unwrap().value, single);
    }

    #[test]
    fn errors() {
        assert!(bce_avg(&[0.5f64], &[1, 0]).is_err());
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(list_loss(empty.view(), &[0, 1, 0]).is_err());
        let c = Array3::<f64>::from_elem((2, 1, 2), 0.5);
        assert!(batch_list_loss(c.view(), array![[0u8, 1]].view()).is_err());
    }

    #[test]
    fn batch_loss_is_mean_of_examples() {
        let c = Array3::from_shape_vec((2, 1, 2), vec![0.5f64, 0.5, 0.9, 0.1]).unwrap();
        let m = array![[1u8, 0], [1, 0]];
        let a = bce_avg(&[0.5, 0.5], &[1, 0]).unwrap();
        let b = bce_avg(&[0.9, 0.1], &[1, 0]).unwrap();
        assert!((batch_list_loss(c.view(), m.view()).unwrap() - (a + b) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn logit_domain_agrees_with_probability_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (l, b, k) = (3, 4, 5);
        let logits = Array2::from_shape_fn((l, b * k), |_| rng.random_range(-6.0..6.0f64));
        let msgs = Array2::from_shape_fn((b, k), |_| rng.random_range(0..2u8));
        let probs =
            Array3::from_shape_fn((b, l, k), |(bi, li, ki)| sigmoid(logits[[li, bi * k + ki]]));
        let mut g = Array2::zeros(logits.raw_dim());
        let from_logits = batch_list_loss_logits(
            logits.view(),
            msgs.view(),
            logit_bound(CLAMP_EPS),
            Some(&mut g),
        )
        .unwrap();
        let from_probs = batch_list_loss(probs.view(), msgs.view()).unwrap();
        assert!((from_logits - from_probs).abs() < 1e-12);
        let h = 1e-6;
        for idx in [(0, 0), (1, 7), (2, 19), (0, 13)] {
            let mut p = logits.clone();
            p[idx] += h;
            let mut m = logits.clone();
            m[idx] -= h;
            let fd = (batch_list_loss_logits(p.view(), msgs.view(), logit_bound(CLAMP_EPS), None)
                .unwrap()
                - batch_list_loss_logits(m.view(), msgs.view(), logit_bound(CLAMP_EPS), None)
                    .unwrap())
                / (2.0 * h);
            assert!((fd - g[idx]).abs() < 1e-8, "{fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn saturated_logits_match_clamped_probabilities() {
        let logits = array![[80.0f32, -80.0]];
        let bound = logit_bound(CLAMP_EPS) as f32;
        let mut g = Array2::zeros((1, 2));
        let v = batch_list_loss_logits(logits.view(), array![[0u8, 1]].view(), bound, Some(&mut g))
            .unwrap();
        // both bits wrong and saturated: -ln(1e-12)
        assert!((v - 27.631_021).abs() < 1e-3, "{v}");
        assert_eq!(g, Array2::<f32>::zeros((1, 2)));
    }

    #[test]
    fn nan_is_not_clamped_away() {
        let bound = logit_bound(CLAMP_EPS);
        for logits in [
            array![[f64::NAN, 0.0], [1.0, 1.0]],
            array![[1.0, 1.0], [f64::NAN, 0.0]],
        ] {
            let v = batch_list_loss_logits(logits.view(), array![[1u8, 1]].view(), bound, None)
                .unwrap();
            assert!(v.is_nan());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn list_and_word() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<u8>, Vec<f64>)> {
            (1usize..6, 1usize..20).prop_flat_map(|(l, k)| {
                (
                    proptest::collection::vec(proptest::collection::vec(0.001f64..0.999, k), l),
                    proptest::collection::vec(0u8..2, k),
                    proptest::collection::vec(0.001f64..0.999, k),
                )
            })
        }

        fn to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
            Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
        }

        proptest! {
            #[test]
            fn appending_a_row_never_increases(
                (rows, u, extra) in list_and_word()
            ) {
                let m = to_matrix(&rows);
                let before = list_loss(m.view(), &u).unwrap().value;
                let mut more = rows.clone();
                more.push(extra);
                let after = list_loss(to_matrix(&more).view(), &u).unwrap().value;
                prop_assert!(after <= before);
            }

            #[test]
            fn row_order_does_not_change_value((rows, u, _e) in list_and_word()) {
                let m = to_matrix(&rows);
                let mut rev = rows.clone();
                rev.reverse();
                let a = list_loss(m.view(), &u).unwrap();
                let b = list_loss(to_matrix(&rev).view(), &u).unwrap();
                prop_assert_eq!(a.value, b.value);
                prop_assert!(a.value >= 0.0);
            }
        }
    }
}
