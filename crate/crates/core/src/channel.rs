//! AWGN channel and SNR bookkeeping.
//!
//! SNR is `10 log10(1 / sigma^2)` for unit-power code symbols.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Noise standard deviation for an SNR in dB. `+inf` maps to zero noise.
pub fn snr_to_sigma(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

/// `Eb/sigma^2 = SNR - 10 log10(R)` in dB, for a code of rate `R`.
pub fn ebsigma_from_snr(snr_db: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid(format!("code rate {rate} outside (0, 1]")));
    }
    Ok(snr_db - 10.0 * rate.log10())
}

/// Inverse of [`ebsigma_from_snr`].
pub fn snr_from_ebsigma(eb_db: f64, rate: f64) -> Result<f64> {
    Ok(eb_db - (ebsigma_from_snr(0.0, rate)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub snr_db: f64,
}

impl ChannelSpec {
    pub fn new(snr_db: f64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("invalid SNR {snr_db} dB")));
        }
        Ok(ChannelSpec { snr_db })
    }

    /// Zero-noise sentinel.
    pub fn noiseless() -> Self {
        ChannelSpec {
            snr_db: f64::INFINITY,
        }
    }

    pub fn sigma(&self) -> f64 {
        snr_to_sigma(self.snr_db)
    }
}

/// Closed SNR interval in dB used for decoder training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct SnrRange {
    low_db: f64,
    high_db: f64,
}

impl SnrRange {
    pub fn new(low_db: f64, high_db: f64) -> Result<Self> {
        if !(low_db.is_finite() && high_db.is_finite()) || low_db > high_db {
            return Err(Error::invalid(format!(
                "invalid SNR range [{low_db}, {high_db}]"
            )));
        }
        Ok(SnrRange { low_db, high_db })
    }

    pub fn low_db(&self) -> f64 {
        self.low_db
    }

    pub fn high_db(&self) -> f64 {
        self.high_db
    }
}

impl TryFrom<[f64; 2]> for SnrRange {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        SnrRange::new(v[0], v[1])
    }
}

impl From<SnrRange> for [f64; 2] {
    fn from(r: SnrRange) -> Self {
        [r.low_db, r.high_db]
    }
}

/// Uniform draw from the range; a degenerate range returns its single value.
pub fn sample_training_snr<R: Rng + ?Sized>(range: &SnrRange, rng: &mut R) -> f64 {
    if range.low_db == range.high_db {
        return range.low_db;
    }
    rng.random_range(range.low_db..=range.high_db)
}

/// Standard normal draw, converted to the working scalar.
pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::of(z)
}

/// A memoryless transform applied to transmitted symbols in place.
///
/// Only AWGN ships; other channels implement the same hook.
pub trait Channel {
    fn corrupt<T: Scalar, R: Rng + ?Sized>(&self, symbols: &mut [T], rng: &mut R) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Awgn {
    pub spec: ChannelSpec,
}

impl Awgn {
    pub fn new(spec: ChannelSpec) -> Self {
        Awgn { spec }
    }
}

impl Channel for Awgn {
    fn corrupt<T: Scalar, R: Rng + ?Sized>(&self, symbols: &mut [T], rng: &mut R) -> Result<()> {
        if symbols.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite channel input"));
        }
        let sigma = self.spec.sigma();
        if sigma == 0.0 {
            return Ok(());
        }
        let sigma = T::of(sigma);
        for x in symbols.iter_mut() {
            *x += sigma * standard_normal::<T, _>(rng);
        }
        Ok(())
    }
}

/// `y = x + w` with `w ~ N(0, sigma^2)` i.i.d.
pub fn transmit<T: Scalar, R: Rng + ?Sized>(
    codeword: &[T],
    spec: &ChannelSpec,
    rng: &mut R,
) -> Result<Vec<T>> {
    let mut y = codeword.to_vec();
    Awgn::new(*spec).corrupt(&mut y, rng)?;
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_values() {
        assert_eq!(snr_to_sigma(0.0), 1.0);
        // closed form values evaluated independently
        assert_relative_eq!(
            snr_to_sigma(1.0),
            0.891_250_938_133_745_6,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            snr_to_sigma(-1.5),
            1.188_502_227_437_018_5,
            max_relative = 1e-12
        );
        assert_eq!(snr_to_sigma(f64::INFINITY), 0.0);
        for snr in [-10.0, -1.5, 0.3, 7.0, 25.0] {
            let s = snr_to_sigma(snr);
            assert_relative_eq!(
                10.0 * (1.0 / (s * s)).log10(),
                snr,
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn sigma_strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for i in -40..40 {
            let s = snr_to_sigma(i as f64 * 0.5);
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn eb_conversion() {
        assert_eq!(ebsigma_from_snr(1.3, 1.0).unwrap(), 1.3);
        assert_relative_eq!(
            ebsigma_from_snr(1.0, 1.0 / 3.0).unwrap(),
            5.771_212_547_196_624,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            ebsigma_from_snr(1.0, 92.0 / 300.0).unwrap(),
            6.133_334_273_741_072,
            epsilon = 1e-9
        );
        assert!(ebsigma_from_snr(1.0, 0.0).is_err());
        assert!(ebsigma_from_snr(1.0, -0.5).is_err());
        assert!(ebsigma_from_snr(1.0, 1.5).is_err());
        assert_relative_eq!(
            snr_from_ebsigma(5.771_212_547_196_624, 1.0 / 3.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn noiseless_is_identity() {
        let x = vec![0.3f64, -1.2, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            transmit(&x, &ChannelSpec::noiseless(), &mut rng).unwrap(),
            x
        );
    }

    #[test]
    fn noise_moments_at_zero_db() {
        let n = 1_000_000;
        let x = vec![0.0f64; n];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = transmit(&x, &ChannelSpec::new(0.0).unwrap(), &mut rng).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn transmit_is_deterministic_and_rejects_nan() {
        let x = vec![1.0f32, -1.0, 0.5, 0.25];
        let spec = ChannelSpec::new(2.0).unwrap();
        let a = transmit(&x, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = transmit(&x, &spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(transmit(&[f32::NAN], &spec, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn training_snr_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let one = SnrRange::new(1.0, 1.0).unwrap();
        assert!((0..100).all(|_| sample_training_snr(&one, &mut rng) == 1.0));
        let r = SnrRange::new(-1.5, 2.0).unwrap();
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_training_snr(&r, &mut rng)).collect();
        assert!(draws.iter().all(|&d| (-1.5..=2.0).contains(&d)));
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.25).abs() < 0.05, "mean {mean}");
        assert!(SnrRange::new(2.0, 1.0).is_err());
    }
}
