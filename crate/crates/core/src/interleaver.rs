//! Fixed random interleaver `pi` and its inverse.
//!
//! Convention: output position `i` holds input position `map[i]`
//! (zero-based). Matrices are permuted along their leading (length-`K`)
//! axis, i.e. every column identically.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PermutationRepr", into = "PermutationRepr")]
pub struct Permutation {
    map: Vec<usize>,
    inverse: Vec<usize>,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct PermutationRepr {
    seed: Option<u64>,
    map: Vec<usize>,
}

impl TryFrom<PermutationRepr> for Permutation {
    type Error = Error;
    fn try_from(r: PermutationRepr) -> Result<Self> {
        let mut p = Permutation::from_map(r.map)?;
        p.seed = r.seed;
        Ok(p)
    }
}

impl From<Permutation> for PermutationRepr {
    fn from(p: Permutation) -> Self {
        PermutationRepr {
            seed: p.seed,
            map: p.map,
        }
    }
}

impl Permutation {
    /// Uniform random permutation of `0..k` (Fisher-Yates), deterministic in `seed`.
    pub fn generate(k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("interleaver length {k} < 2")));
        }
        let mut map: Vec<usize> = (0..k).collect();
        map.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut p = Permutation::from_map(map)?;
        p.seed = Some(seed);
        Ok(p)
    }

    pub fn identity(k: usize) -> Self {
        Permutation::from_map((0..k).collect()).expect("identity is a bijection")
    }

    /// Validates that `map` is a bijection on `0..map.len()`.
    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let k = map.len();
        let mut inverse = vec![usize::MAX; k];
        for (i, &m) in map.iter().enumerate() {
            if m >= k || inverse[m] != usize::MAX {
                return Err(Error::invalid("interleaver map is not a bijection"));
            }
            inverse[m] = i;
        }
        Ok(Permutation {
            map,
            inverse,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn inverse_map(&self) -> &[usize] {
        &self.inverse
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::invalid(format!(
                "sequence length {n} does not match interleaver length {}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn permute<T: Clone>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        Ok(gather(x, &self.map))
    }

    pub fn inverse_permute<T: Clone>(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        Ok(gather(x, &self.inverse))
    }

    /// Permutes the rows of a `K x L` matrix.
    pub fn permute_rows<T: Clone>(&self, m: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_len(m.nrows())?;
        Ok(m.select(Axis(0), &self.map))
    }

    pub fn inverse_permute_rows<T: Clone>(&self, m: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_len(m.nrows())?;
        Ok(m.select(Axis(0), &self.inverse))
    }
}

fn gather<T: Clone>(x: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| x[i].clone()).collect()
}

/// Applies `idx` within each length-`k` segment of every row of a
/// channel-major batch matrix `(channels, batch * k)`.
pub(crate) fn gather_segments<T: Copy + Default>(x: ArrayView2<'_, T>, idx: &[usize]) -> Array2<T> {
    let k = idx.len();
    let (rows, cols) = x.dim();
    debug_assert_eq!(cols % k, 0);
    let mut out = Array2::<T>::default((rows, cols));
    for (src, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
        let src = src.as_slice().expect("standard layout");
        let dst = dst.as_slice_mut().expect("standard layout");
        for (s, d) in src.chunks_exact(k).zip(dst.chunks_exact_mut(k)) {
            for (di, &i) in d.iter_mut().zip(idx) {
                *di = s[i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn definition_example() {
        // 1-based [3,1,4,2] -> zero-based [2,0,3,1]
        let p = Permutation::from_map(vec![2, 0, 3, 1]).unwrap();
        assert_eq!(
            p.permute(&['a', 'b', 'c', 'd']).unwrap(),
            vec!['c', 'a', 'd', 'b']
        );
        assert_eq!(
            p.inverse_permute(&['c', 'a', 'd', 'b']).unwrap(),
            vec!['a', 'b', 'c', 'd']
        );
    }

    #[test]
    fn identity_is_noop() {
        let p = Permutation::identity(5);
        let x = [1, 2, 3, 4, 5];
        assert_eq!(p.permute(&x).unwrap(), x);
        assert_eq!(p.inverse_permute(&x).unwrap(), x);
    }

    #[test]
    fn generate_is_deterministic_bijection() {
        let a = Permutation::generate(100, 42).unwrap();
        let b = Permutation::generate(100, 42).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.map().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        for seed in 0..20u64 {
            assert_ne!(
                Permutation::generate(100, seed).unwrap(),
                Permutation::generate(100, seed + 1000).unwrap()
            );
        }
        assert!(Permutation::generate(1, 0).is_err());
    }

    #[test]
    fn invalid_maps_rejected() {
        assert!(Permutation::from_map(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_map(vec![0, 3, 1]).is_err());
        let p = Permutation::identity(3);
        assert!(p.permute(&[1, 2]).is_err());
        assert!(p.permute_rows(array![[1.0], [2.0]].view()).is_err());
    }

    #[test]
    fn matrix_permutation_matches_column_permutation() {
        let p = Permutation::generate(6, 1).unwrap();
        let m = Array2::from_shape_fn((6, 3), |(i, j)| (10 * i + j) as f64);
        let pm = p.permute_rows(m.view()).unwrap();
        for l in 0..3 {
            let col: Vec<f64> = m.column(l).to_vec();
            assert_eq!(pm.column(l).to_vec(), p.permute(&col).unwrap());
        }
        assert_eq!(p.inverse_permute_rows(pm.view()).unwrap(), m);
    }

    #[test]
    fn serde_keeps_explicit_map() {
        let p = Permutation::generate(10, 7).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"map\""));
        let q: Permutation = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        assert!(serde_json::from_str::<Permutation>(r#"{"seed":null,"map":[0,0]}"#).is_err());
    }

    #[test]
    fn segment_gather_per_example() {
        let p = Permutation::from_map(vec![2, 0, 1]).unwrap();
        let x = array![[1, 2, 3, 4, 5, 6]];
        let y = gather_segments(x.view(), p.map());
        assert_eq!(y, array![[3, 1, 2, 6, 4, 5]]);
        assert_eq!(gather_segments(y.view(), p.inverse_map()), x);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trips(seed in any::<u64>(), x in proptest::collection::vec(any::<i32>(), 100)) {
                let p = Permutation::generate(100, seed).unwrap();
                prop_assert_eq!(p.inverse_permute(&p.permute(&x).unwrap()).unwrap(), x.clone());
                prop_assert_eq!(p.permute(&p.inverse_permute(&x).unwrap()).unwrap(), x);
            }
        }
    }
}
