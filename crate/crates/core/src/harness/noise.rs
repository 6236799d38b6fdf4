use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dsp::{DspError, Waveform};

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("SNR {0} dB is not usable (NaN or -inf)")]
    Snr(f64),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Adds seeded white Gaussian noise, scaled so the empirical signal-to-noise
/// power ratio equals `snr_db` exactly before clamping. `+inf` returns `x`.
pub fn add_gaussian_noise(x: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform, NoiseError> {
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if !snr_db.is_finite() {
        return Err(NoiseError::Snr(snr_db));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..x.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let power = |v: &[f64]| v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64;
    let (px, pn) = (power(x.samples()), power(&noise));
    let gain = if pn > 0.0 {
        (px / pn / 10f64.powf(snr_db / 10.0)).sqrt()
    } else {
        0.0
    };
    let y = x
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + gain * n)
        .collect();
    Ok(Waveform::clamped(y, x.sample_rate())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone() -> Waveform {
        Waveform::new(
            (0..8000)
                .map(|i| 0.4 * (2.0 * PI * 330.0 * i as f64 / 16000.0).sin())
                .collect(),
            16000,
        )
        .unwrap()
    }

    #[test]
    fn infinite_snr_leaves_input_unchanged() {
        let x = tone();
        assert_eq!(add_gaussian_noise(&x, f64::INFINITY, 3).unwrap(), x);
    }

    #[test]
    fn measured_snr_matches_request() {
        let x = tone();
        for seed in 0..10 {
            for snr in [0.0, 20.0, 30.0] {
                let y = add_gaussian_noise(&x, snr, seed).unwrap();
                let ps: f64 = x.samples().iter().map(|v| v * v).sum();
                let pn: f64 = x
                    .samples()
                    .iter()
                    .zip(y.samples())
                    .map(|(a, b)| (b - a).powi(2))
                    .sum();
                let measured = 10.0 * (ps / pn).log10();
                assert!(
                    (measured - snr).abs() <= 0.1,
                    "seed {seed}: {measured} vs {snr}"
                );
            }
        }
    }

    #[test]
    fn same_seed_same_noise() {
        let x = tone();
        assert_eq!(
            add_gaussian_noise(&x, 10.0, 9).unwrap(),
            add_gaussian_noise(&x, 10.0, 9).unwrap()
        );
        assert_ne!(
            add_gaussian_noise(&x, 10.0, 9).unwrap(),
            add_gaussian_noise(&x, 10.0, 10).unwrap()
        );
    }

    #[test]
    fn output_is_clamped_and_bad_snr_rejected() {
        let x = tone();
        let y = add_gaussian_noise(&x, -20.0, 1).unwrap();
        assert!(y.samples().iter().all(|v| v.abs() <= 1.0));
        assert!(matches!(
            add_gaussian_noise(&x, f64::NAN, 1),
            Err(NoiseError::Snr(_))
        ));
        assert!(matches!(
            add_gaussian_noise(&x, f64::NEG_INFINITY, 1),
            Err(NoiseError::Snr(_))
        ));
    }
}
