use super::{reflect_index, DspError, Waveform};

/// Normalized Gaussian kernel truncated at radius `ceil(4 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, DspError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DspError::InvalidSigma(sigma));
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    Ok(kernel)
}

/// Time-domain Gaussian smoothing with reflect padding; output length equals input length.
pub fn gaussian_filter(x: &Waveform, sigma: f64) -> Result<Waveform, DspError> {
    let kernel = gaussian_kernel(sigma)?;
    let radius = (kernel.len() / 2) as isize;
    let src = x.samples();
    let out = (0..src.len() as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * src[reflect_index(i + j as isize - radius, src.len())])
                .sum()
        })
        .collect();
    Waveform::new(out, x.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_signal_is_preserved() {
        let x = Waveform::new(vec![0.37; 500], 16000).unwrap();
        for sigma in [0.3, 1.0, 2.0, 7.5] {
            let y = gaussian_filter(&x, sigma).unwrap();
            assert!(y.samples().iter().all(|v| (v - 0.37).abs() < 1e-9));
        }
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let sigma = 2.0;
        let kernel = gaussian_kernel(sigma).unwrap();
        assert_eq!(kernel.len(), 17);
        assert!((kernel.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut impulse = vec![0.0; 101];
        impulse[50] = 1.0;
        let y = gaussian_filter(&Waveform::new(impulse, 16000).unwrap(), sigma).unwrap();
        let r = kernel.len() / 2;
        for (i, v) in y.samples().iter().enumerate() {
            let expected = if (50 - r..=50 + r).contains(&i) {
                kernel[i + r - 50]
            } else {
                0.0
            };
            assert!((v - expected).abs() < 1e-12);
        }
        assert!((y.samples().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn smoothing_reduces_white_noise_variance() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<f64> = (0..4000)
                .map(|_| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let x = Waveform::new(samples, 16000).unwrap();
            let y = gaussian_filter(&x, 2.0).unwrap();
            let var = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                v.iter().map(|s| (s - m).powi(2)).sum::<f64>() / v.len() as f64
            };
            assert!(var(y.samples()) < var(x.samples()));
        }
    }

    #[test]
    fn length_preserved_and_sigma_validated() {
        let x = Waveform::new(vec![0.1, -0.2, 0.3], 16000).unwrap();
        assert_eq!(gaussian_filter(&x, 5.0).unwrap().len(), 3);
        assert_eq!(
            gaussian_filter(&x, 0.0).unwrap_err(),
            DspError::InvalidSigma(0.0)
        );
        assert!(gaussian_filter(&x, -1.0).is_err());
        assert!(gaussian_filter(&x, f64::NAN).is_err());
    }
}
