//! BPSK over AWGN: modulation, noise, SNR conversion and channel LLRs.
//!
//! LLRs follow `L = log P(bit = 0) / P(bit = 1)` and BPSK maps bit `c` to
//! `2c - 1`, so a positive LLR favours bit 0 and the symbol `-1`.

use rand::Rng;
use rand_distr::StandardNormal;

/// Saturation bound for every LLR-domain quantity.
pub const L_MAX: f64 = 20.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChannelError {
    #[error("noise standard deviation must be positive, got {0}")]
    Sigma(f64),
    #[error("empty frame batch")]
    EmptyBatch,
}

/// Received samples together with the noise level they were drawn at.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisySignal {
    pub samples: Vec<f64>,
    pub sigma: f64,
}

/// `0 -> -1`, `1 -> +1`.
pub fn bpsk_map(c: &[u8]) -> Vec<f64> {
    c.iter().map(|&b| 2.0 * f64::from(b & 1) - 1.0).collect()
}

pub fn awgn<R: Rng + ?Sized>(s: &[f64], sigma: f64, rng: &mut R) -> Result<NoisySignal, ChannelError> {
    let mut samples = s.to_vec();
    add_noise(&mut samples, sigma, rng)?;
    Ok(NoisySignal { samples, sigma })
}

/// Adds i.i.d. `N(0, sigma^2)` noise in place.
pub fn add_noise<R: Rng + ?Sized>(s: &mut [f64], sigma: f64, rng: &mut R) -> Result<(), ChannelError> {
    if !(sigma > 0.0) {
        return Err(ChannelError::Sigma(sigma));
    }
    for v in s.iter_mut() {
        let w: f64 = rng.sample(StandardNormal);
        *v += sigma * w;
    }
    Ok(())
}

/// Noise standard deviation of a unit-power real BPSK channel at `ebn0_db`
/// for code rate `rate`.
pub fn sigma_from_ebn0(ebn0_db: f64, rate: f64) -> f64 {
    (1.0 / (2.0 * rate * 10f64.powf(ebn0_db / 10.0))).sqrt()
}

#[inline]
pub fn clamp_llr(x: f64) -> f64 {
    x.clamp(-L_MAX, L_MAX)
}

/// `l = -2 y / sigma^2`, clamped to `[-L_MAX, L_MAX]`.
pub fn llr_from_samples(y: &[f64], sigma: f64) -> Vec<f64> {
    let scale = -2.0 / (sigma * sigma);
    y.iter().map(|&v| clamp_llr(scale * v)).collect()
}

pub fn channel_llr(y: &NoisySignal) -> Vec<f64> {
    llr_from_samples(&y.samples, y.sigma)
}

/// Mean over frames of the per-symbol energy `<s, s> / n`.
pub fn measure_average_power<F: AsRef<[f64]>>(frames: &[F]) -> Result<f64, ChannelError> {
    if frames.is_empty() {
        return Err(ChannelError::EmptyBatch);
    }
    let total: f64 = frames
        .iter()
        .map(|f| {
            let f = f.as_ref();
            f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64
        })
        .sum();
    Ok(total / frames.len() as f64)
}

/// Gaussian tail probability `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Bit error probability of uncoded BPSK at noise level `sigma`.
pub fn uncoded_ber(sigma: f64) -> f64 {
    q_function(1.0 / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gauss(x: f64, mu: f64, s: f64) -> f64 {
        (-(x - mu) * (x - mu) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn bpsk_values_and_power() {
        assert_eq!(bpsk_map(&[0, 1, 1]), vec![-1.0, 1.0, 1.0]);
        let zero = bpsk_map(&[0; 9]);
        assert!(zero.iter().all(|&v| v == -1.0));
        assert_eq!(measure_average_power(&[zero]).unwrap(), 1.0);
        assert_eq!(measure_average_power(&[vec![0.0; 4]]).unwrap(), 0.0);
        assert_eq!(measure_average_power::<Vec<f64>>(&[]), Err(ChannelError::EmptyBatch));
    }

    #[test]
    fn sigma_conversion() {
        assert!((sigma_from_ebn0(0.0, 1.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let s = sigma_from_ebn0(4.0, 0.5);
        assert!((s - 0.630_957_344_480_193).abs() < 1e-12);
        // Q(1/sigma) = Q(sqrt(2 R Eb/N0))
        let ebn0 = 10f64.powf(0.4);
        assert!((uncoded_ber(s) - q_function((2.0 * 0.5 * ebn0).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn llr_matches_two_gaussian_posterior() {
        let sigma = 0.8;
        for i in -50..=50 {
            let y = i as f64 * 0.05;
            let exact = (gauss(y, -1.0, sigma) / gauss(y, 1.0, sigma)).ln();
            assert!((llr_from_samples(&[y], sigma)[0] - exact).abs() < 1e-12);
        }
        assert_eq!(llr_from_samples(&[0.0], 1.0)[0], 0.0);
        assert_eq!(llr_from_samples(&[10.0 * 0.25], 0.5)[0], -20.0);
    }

    #[test]
    fn noise_variance_and_determinism() {
        let sigma = 0.7;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = awgn(&vec![1.0; 1_000_000], sigma, &mut rng).unwrap();
        let var = y.samples.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / 1e6;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.01);
        let a = awgn(&[1.0, -1.0], 0.5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = awgn(&[1.0, -1.0], 0.5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let tiny = awgn(&[1.0, -1.0], 1e-300, &mut rng).unwrap();
        assert_eq!(tiny.samples, vec![1.0, -1.0]);
        assert_eq!(awgn(&[1.0], 0.0, &mut rng), Err(ChannelError::Sigma(0.0)));
    }

    #[test]
    fn noiseless_round_trip() {
        let c = [0u8, 1, 1, 0, 1];
        let y = NoisySignal { samples: bpsk_map(&c), sigma: 0.5 };
        let hard: Vec<u8> = channel_llr(&y).iter().map(|&l| u8::from(l < 0.0)).collect();
        assert_eq!(hard, c);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn llr_is_odd(y in -3.0f64..3.0, sigma in 0.3f64..2.0) {
                let a = llr_from_samples(&[y], sigma)[0];
                let b = llr_from_samples(&[-y], sigma)[0];
                prop_assert_eq!(a, -b);
            }
        }
    }
}
