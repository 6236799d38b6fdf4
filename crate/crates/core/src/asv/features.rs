use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::AsvError;
use crate::dsp::{
    mel_filterbank, reflect_index, FrameMatrix, MelFilterbank, StftConfig, StftPlan, Waveform,
    WindowKind,
};

/// Log-mel filterbank front end: Hamming window, power spectrum, floored log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop_len: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    /// 25 ms / 10 ms at 16 kHz, 64 mels over the full band.
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_len: 400,
            hop_len: 160,
            n_mels: 64,
            fmin: 0.0,
            fmax: 8_000.0,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn stft_config(&self) -> Result<StftConfig, AsvError> {
        Ok(StftConfig::new(
            self.window_len,
            self.hop_len,
            WindowKind::Hamming,
        )?)
    }

    pub fn validate(&self) -> Result<(), AsvError> {
        if self.n_mels == 0 {
            return Err(AsvError::InvalidModel("n_mels must be positive".into()));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(AsvError::InvalidModel("log_floor must be positive".into()));
        }
        self.stft_config()?;
        Ok(())
    }
}

/// Precomputed STFT plan and filterbank for one [`FeatureConfig`].
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    plan: StftPlan,
    filterbank: MelFilterbank,
    /// Nonzero span of each filter: `(first_bin, weights)`.
    sparse: Vec<(usize, Vec<f64>)>,
}

/// Intermediate values kept for the backward pass.
struct Forward {
    spectra: FrameMatrix<Complex64>,
    mel_energy: FrameMatrix<f64>,
    features: FrameMatrix<f64>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self, AsvError> {
        config.validate()?;
        let stft_cfg = config.stft_config()?;
        let filterbank = mel_filterbank(
            config.n_mels,
            &stft_cfg,
            config.sample_rate,
            config.fmin,
            config.fmax,
        )?;
        let sparse = filterbank
            .weights
            .iter_rows()
            .map(|row| {
                let first = row.iter().position(|w| *w > 0.0).unwrap_or(0);
                let last = row.iter().rposition(|w| *w > 0.0).unwrap_or(0);
                (first, row[first..=last].to_vec())
            })
            .collect();
        Ok(Self {
            config,
            plan: StftPlan::new(stft_cfg)?,
            filterbank,
            sparse,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    fn check_input(&self, x: &Waveform) -> Result<(), AsvError> {
        if x.len() < self.config.window_len {
            return Err(AsvError::TooShort {
                len: x.len(),
                window: self.config.window_len,
            });
        }
        if x.sample_rate() != self.config.sample_rate {
            return Err(AsvError::SampleRate {
                expected: self.config.sample_rate,
                got: x.sample_rate(),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &Waveform) -> Result<Forward, AsvError> {
        self.check_input(x)?;
        let (padded, n_frames) = self.plan.padded(x.samples())?;
        let spectra = self.plan.analyze_padded(&padded, n_frames);
        let n_mels = self.config.n_mels;
        let mut mel_energy = FrameMatrix::filled(n_frames, n_mels, 0.0);
        let mut features = FrameMatrix::filled(n_frames, n_mels, 0.0);
        for t in 0..n_frames {
            let spec = spectra.row(t);
            let energy = mel_energy.row_mut(t);
            for (e, (first, w)) in energy.iter_mut().zip(&self.sparse) {
                *e = w
                    .iter()
                    .zip(&spec[*first..])
                    .map(|(w, c)| w * c.norm_sqr())
                    .sum();
            }
            for (f, e) in features.row_mut(t).iter_mut().zip(mel_energy.row(t)) {
                *f = (e + self.config.log_floor).ln();
            }
        }
        Ok(Forward {
            spectra,
            mel_energy,
            features,
        })
    }

    /// `n_frames x n_mels` log-mel features.
    pub fn features(&self, x: &Waveform) -> Result<FrameMatrix<f64>, AsvError> {
        Ok(self.forward(x)?.features)
    }

    /// Mean over frames of the log-mel features.
    pub fn pooled(&self, x: &Waveform) -> Result<Vec<f64>, AsvError> {
        Ok(mean_pool(&self.features(x)?))
    }

    /// Gradient with respect to the samples of `x` for a loss whose gradient
    /// with respect to the pooled features is `grad_pooled`.
    pub fn pooled_backward(&self, x: &Waveform, grad_pooled: &[f64]) -> Result<Vec<f64>, AsvError> {
        let fwd = self.forward(x)?;
        let cfg = self.plan.config();
        let n_frames = fwd.features.rows();
        let n_bins = cfg.n_bins();
        let inv_frames = 1.0 / n_frames as f64;
        let window = self.plan.window();
        let ifft = self.plan.inverse_fft();

        let mut grad_padded = vec![0.0; cfg.span_len(n_frames)];
        let mut grad_power = vec![0.0; n_bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
        for t in 0..n_frames {
            grad_power.iter_mut().for_each(|g| *g = 0.0);
            for ((g_mu, e), (first, w)) in grad_pooled
                .iter()
                .zip(fwd.mel_energy.row(t))
                .zip(&self.sparse)
            {
                let g_energy = g_mu * inv_frames / (e + self.config.log_floor);
                for (gp, wk) in grad_power[*first..].iter_mut().zip(w) {
                    *gp += g_energy * wk;
                }
            }
            // d|X_k|^2 / dx_n = 2 Re(X_k e^{+i 2 pi k n / N}): an inverse DFT
            // of the one-sided spectrum g_k X_k.
            let spec = fwd.spectra.row(t);
            for (k, b) in buf.iter_mut().enumerate() {
                *b = if k < n_bins {
                    spec[k] * grad_power[k]
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            ifft.process_with_scratch(&mut buf, &mut scratch);
            let start = t * cfg.hop_len;
            for (n, w) in window.iter().enumerate() {
                grad_padded[start + n] += 2.0 * w * buf[n].re;
            }
        }

        let pad = cfg.pad_len() as isize;
        let mut grad = vec![0.0; x.len()];
        for (p, g) in grad_padded.iter().enumerate() {
            grad[reflect_index(p as isize - pad, x.len())] += g;
        }
        Ok(grad)
    }
}

pub fn mean_pool(features: &FrameMatrix<f64>) -> Vec<f64> {
    let mut mean = vec![0.0; features.cols()];
    for row in features.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = features.rows().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Log-mel features of `x` (`n_frames x n_mels`).
pub fn extract_features(x: &Waveform, cfg: &FeatureConfig) -> Result<FrameMatrix<f64>, AsvError> {
    FeatureExtractor::new(*cfg)?.features(x)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn voiced(amp: f64) -> Waveform {
        let x = (0..16000)
            .map(|n| {
                let t = n as f64 / 16000.0;
                amp * (0.5 * (2.0 * PI * 150.0 * t).sin() + 0.3 * (2.0 * PI * 450.0 * t).sin())
            })
            .collect();
        Waveform::new(x, 16000).unwrap()
    }

    #[test]
    fn silence_yields_log_floor() {
        let cfg = FeatureConfig::default();
        let f = extract_features(&Waveform::zeros(16000, 16000).unwrap(), &cfg).unwrap();
        assert_eq!((f.rows(), f.cols()), (101, 64));
        let expected = cfg.log_floor.ln();
        assert!(f.as_slice().iter().all(|v| *v == expected));
    }

    #[test]
    fn doubling_amplitude_adds_log_four_to_dominant_bands() {
        let cfg = FeatureConfig::default();
        let a = extract_features(&voiced(0.2), &cfg).unwrap();
        let b = extract_features(&voiced(0.4), &cfg).unwrap();
        let max = a.as_slice().iter().copied().fold(f64::MIN, f64::max);
        let mut checked = 0;
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            if *x > max - 5.0 {
                assert!((y - x - 4f64.ln()).abs() < 1e-6);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn too_short_input_is_rejected() {
        let cfg = FeatureConfig::default();
        let err = extract_features(&Waveform::zeros(399, 16000).unwrap(), &cfg).unwrap_err();
        assert!(matches!(
            err,
            AsvError::TooShort {
                len: 399,
                window: 400
            }
        ));
    }

    #[test]
    fn wrong_sample_rate_is_rejected() {
        let cfg = FeatureConfig::default();
        let err = extract_features(&Waveform::zeros(8000, 8000).unwrap(), &cfg).unwrap_err();
        assert!(matches!(err, AsvError::SampleRate { .. }));
    }
}
