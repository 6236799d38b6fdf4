use nalgebra::DMatrix;

use super::{DspError, FrameMatrix, MagSpectrogram, StftConfig};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Relative singular-value cutoff of the rank check. Filters narrower than
/// one FFT bin make neighbouring rows nearly parallel.
pub const RANK_RTOL: f64 = 1e-6;

/// Triangular filters on the HTK mel scale, peak value 1 (no area normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `n_mels x n_bins`.
    pub weights: FrameMatrix<f64>,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
    /// Center frequency of each filter in Hz, increasing.
    pub centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.cols()
    }

    /// Applies the filterbank to one spectral frame.
    pub fn project_frame(&self, frame: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(self.weights.iter_rows()) {
            *o = w.iter().zip(frame).map(|(a, b)| a * b).sum();
        }
    }

    /// Moore-Penrose pseudo-inverse (`n_bins x n_mels`) via SVD.
    ///
    /// Fails when the filterbank does not have full numerical row rank:
    /// singular values below [`RANK_RTOL`] times the largest count as zero.
    pub fn pseudo_inverse(&self) -> Result<FrameMatrix<f64>, DspError> {
        let (m, n) = (self.n_mels(), self.n_bins());
        let a = DMatrix::from_row_slice(m, n, self.weights.as_slice());
        let svd = a.svd(true, true);
        let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let tol = sigma_max * RANK_RTOL;
        let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
        if rank < m {
            return Err(DspError::DegenerateFilterbank { rank, n_mels: m });
        }
        let pinv = svd
            .pseudo_inverse(tol)
            .map_err(|e| DspError::InvalidBand(e.to_string()))?;
        let mut data = Vec::with_capacity(n * m);
        for r in 0..n {
            for c in 0..m {
                data.push(pinv[(r, c)]);
            }
        }
        FrameMatrix::from_vec(n, m, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// `n_frames x n_mels`, entrywise non-negative.
    pub values: FrameMatrix<f64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

/// Builds `n_mels` triangular filters between `fmin` and `fmax` for the bins of `cfg`.
pub fn mel_filterbank(
    n_mels: usize,
    cfg: &StftConfig,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank, DspError> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels < 2 {
        return Err(DspError::InvalidBand(format!(
            "need at least 2 mels, got {n_mels}"
        )));
    }
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(DspError::InvalidBand(format!(
            "require 0 <= fmin < fmax <= {nyquist}, got [{fmin}, {fmax}]"
        )));
    }
    let n_bins = cfg.n_bins();
    let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * sample_rate as f64 / cfg.fft_len as f64)
        .collect();

    let mut weights = FrameMatrix::filled(n_mels, n_bins, 0.0);
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = weights.row_mut(m);
        for (w, f) in row.iter_mut().zip(&bin_hz) {
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            *w = rising.min(falling).max(0.0);
        }
        if row.iter().all(|w| *w <= 0.0) {
            return Err(DspError::EmptyFilter(m));
        }
    }
    Ok(MelFilterbank {
        weights,
        fmin,
        fmax,
        sample_rate,
        centers: edges[1..=n_mels].to_vec(),
    })
}

/// `M * fb^T`: one mel row per spectrogram frame.
pub fn lin_to_mel(mag: &MagSpectrogram, fb: &MelFilterbank) -> Result<MelSpectrogram, DspError> {
    if mag.n_bins() != fb.n_bins() {
        return Err(DspError::ShapeMismatch {
            expected: fb.n_bins(),
            got: mag.n_bins(),
        });
    }
    let mut values = FrameMatrix::filled(mag.n_frames(), fb.n_mels(), 0.0);
    for t in 0..mag.n_frames() {
        fb.project_frame(mag.values.row(t), values.row_mut(t));
    }
    Ok(MelSpectrogram {
        values,
        config: mag.config,
        sample_rate: mag.sample_rate,
    })
}

/// Precomputed pseudo-inverse for repeated mel-to-linear estimates.
#[derive(Debug, Clone)]
pub struct MelInverse {
    /// `n_bins x n_mels`.
    pinv: FrameMatrix<f64>,
}

impl MelInverse {
    pub fn new(fb: &MelFilterbank) -> Result<Self, DspError> {
        Ok(Self {
            pinv: fb.pseudo_inverse()?,
        })
    }

    pub fn matrix(&self) -> &FrameMatrix<f64> {
        &self.pinv
    }

    /// `Mel * (fb^+)^T`, negative entries clamped to zero.
    pub fn apply(&self, mel: &MelSpectrogram) -> Result<MagSpectrogram, DspError> {
        let n_mels = self.pinv.cols();
        if mel.values.cols() != n_mels {
            return Err(DspError::ShapeMismatch {
                expected: n_mels,
                got: mel.values.cols(),
            });
        }
        let n_bins = self.pinv.rows();
        let mut values = FrameMatrix::filled(mel.values.rows(), n_bins, 0.0);
        for t in 0..mel.values.rows() {
            let src = mel.values.row(t);
            for (o, p) in values.row_mut(t).iter_mut().zip(self.pinv.iter_rows()) {
                let v: f64 = p.iter().zip(src).map(|(a, b)| a * b).sum();
                *o = v.max(0.0);
            }
        }
        Ok(MagSpectrogram {
            values,
            config: mel.config,
            sample_rate: mel.sample_rate,
        })
    }
}

/// Linear magnitude estimate from a mel spectrogram via the filterbank pseudo-inverse.
pub fn mel_to_linear_pinv(
    mel: &MelSpectrogram,
    fb: &MelFilterbank,
) -> Result<MagSpectrogram, DspError> {
    MelInverse::new(fb)?.apply(mel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::WindowKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn asv_cfg() -> StftConfig {
        StftConfig::new(400, 100, WindowKind::Hann).unwrap()
    }

    fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                for l in 0..k {
                    out[i * m + j] += a[i * k + l] * b[l * m + j];
                }
            }
        }
        out
    }

    fn rel_frobenius(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn htk_scale_at_700_hz() {
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn vocoder_style_filterbank_shape() {
        let cfg = StftConfig::new(800, 200, WindowKind::Hann).unwrap();
        let fb = mel_filterbank(80, &cfg, 16000, 80.0, 7600.0).unwrap();
        assert_eq!((fb.n_mels(), fb.n_bins()), (80, cfg.fft_len / 2 + 1));
        assert!(fb.weights.as_slice().iter().all(|w| *w >= 0.0));
        assert!(fb.centers.windows(2).all(|c| c[0] < c[1]));
        for row in fb.weights.iter_rows() {
            assert!(row.iter().any(|w| *w > 0.0));
            assert!(row.iter().all(|w| *w <= 1.0));
        }
    }

    #[test]
    fn band_outside_nyquist_is_rejected() {
        let cfg = asv_cfg();
        assert!(matches!(
            mel_filterbank(64, &cfg, 16000, 0.0, 9000.0),
            Err(DspError::InvalidBand(_))
        ));
        assert!(mel_filterbank(64, &cfg, 16000, 500.0, 400.0).is_err());
        assert!(mel_filterbank(1, &cfg, 16000, 0.0, 8000.0).is_err());
    }

    #[test]
    fn too_many_mels_leave_an_empty_filter() {
        let cfg = StftConfig::new(64, 32, WindowKind::Hann).unwrap();
        assert!(matches!(
            mel_filterbank(64, &cfg, 16000, 0.0, 8000.0),
            Err(DspError::EmptyFilter(_))
        ));
    }

    #[test]
    fn lin_to_mel_matches_double_loop() {
        let cfg = asv_cfg();
        let fb = mel_filterbank(64, &cfg, 16000, 0.0, 8000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let frames = 7;
        let data: Vec<f64> = (0..frames * 257)
            .map(|_| rng.random_range(0.0..3.0))
            .collect();
        let mag = MagSpectrogram {
            values: FrameMatrix::from_vec(frames, 257, data.clone()).unwrap(),
            config: cfg,
            sample_rate: 16000,
        };
        let mel = lin_to_mel(&mag, &fb).unwrap();
        for t in 0..frames {
            for m in 0..64 {
                let mut expected = 0.0;
                for k in 0..257 {
                    expected += data[t * 257 + k] * fb.weights.get(m, k);
                }
                assert!((mel.values.get(t, m) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_bin_selects_filterbank_column() {
        let cfg = asv_cfg();
        let fb = mel_filterbank(64, &cfg, 16000, 0.0, 8000.0).unwrap();
        let mut values = FrameMatrix::filled(1, 257, 0.0);
        values.row_mut(0)[40] = 2.5;
        let mag = MagSpectrogram {
            values,
            config: cfg,
            sample_rate: 16000,
        };
        let mel = lin_to_mel(&mag, &fb).unwrap();
        for m in 0..64 {
            assert_eq!(mel.values.get(0, m), 2.5 * fb.weights.get(m, 40));
        }
        let zero = MagSpectrogram {
            values: FrameMatrix::filled(3, 257, 0.0),
            config: cfg,
            sample_rate: 16000,
        };
        assert!(lin_to_mel(&zero, &fb)
            .unwrap()
            .values
            .as_slice()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn lin_to_mel_rejects_shape_mismatch() {
        let cfg = asv_cfg();
        let fb = mel_filterbank(64, &cfg, 16000, 0.0, 8000.0).unwrap();
        let mag = MagSpectrogram {
            values: FrameMatrix::filled(2, 100, 0.0),
            config: cfg,
            sample_rate: 16000,
        };
        assert!(matches!(
            lin_to_mel(&mag, &fb),
            Err(DspError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn pseudo_inverse_satisfies_penrose_conditions() {
        for (n_mels, cfg, fmin, fmax) in [
            (64, asv_cfg(), 0.0, 8000.0),
            (
                80,
                StftConfig::new(800, 200, WindowKind::Hann).unwrap(),
                80.0,
                7600.0,
            ),
        ] {
            let fb = mel_filterbank(n_mels, &cfg, 16000, fmin, fmax).unwrap();
            let (m, n) = (fb.n_mels(), fb.n_bins());
            let a = fb.weights.as_slice();
            let p = fb.pseudo_inverse().unwrap();
            let p = p.as_slice();
            let ap = matmul(a, p, m, n, m);
            let pa = matmul(p, a, n, m, n);
            // A P A = A, P A P = P
            assert!(rel_frobenius(&matmul(&ap, a, m, m, n), a) < 1e-8);
            assert!(rel_frobenius(&matmul(&pa, p, n, n, m), p) < 1e-8);
            // A P and P A are symmetric
            let sym = |x: &[f64], d: usize| {
                let t: Vec<f64> = (0..d * d).map(|i| x[(i % d) * d + i / d]).collect();
                rel_frobenius(x, &t)
            };
            assert!(sym(&ap, m) < 1e-8);
            assert!(sym(&pa, n) < 1e-8);
        }
    }

    #[test]
    fn pinv_recovers_row_space_spectra() {
        let cfg = asv_cfg();
        let fb = mel_filterbank(64, &cfg, 16000, 0.0, 8000.0).unwrap();
        // M = c^T fb with non-negative c lies in the row space of fb.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frames = 4;
        let mut values = FrameMatrix::filled(frames, 257, 0.0);
        for t in 0..frames {
            let coeffs: Vec<f64> = (0..64).map(|_| rng.random_range(0.1..1.0)).collect();
            for (k, v) in values.row_mut(t).iter_mut().enumerate() {
                *v = coeffs
                    .iter()
                    .enumerate()
                    .map(|(m, c)| c * fb.weights.get(m, k))
                    .sum();
            }
        }
        let mag = MagSpectrogram {
            values,
            config: cfg,
            sample_rate: 16000,
        };
        let back = mel_to_linear_pinv(&lin_to_mel(&mag, &fb).unwrap(), &fb).unwrap();
        assert!(rel_frobenius(back.values.as_slice(), mag.values.as_slice()) < 1e-6);

        let zero = MelSpectrogram {
            values: FrameMatrix::filled(2, 64, 0.0),
            config: cfg,
            sample_rate: 16000,
        };
        let z = mel_to_linear_pinv(&zero, &fb).unwrap();
        assert!(z.values.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pinv_output_is_non_negative() {
        let cfg = asv_cfg();
        let fb = mel_filterbank(64, &cfg, 16000, 0.0, 8000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..5 * 64).map(|_| rng.random_range(0.0..1.0)).collect();
        let mel = MelSpectrogram {
            values: FrameMatrix::from_vec(5, 64, data).unwrap(),
            config: cfg,
            sample_rate: 16000,
        };
        let lin = mel_to_linear_pinv(&mel, &fb).unwrap();
        assert!(lin.values.as_slice().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn sub_bin_filters_are_reported_degenerate() {
        let short = StftConfig::new(320, 80, WindowKind::Hann).unwrap();
        let fb = mel_filterbank(80, &short, 16000, 80.0, 7600.0).unwrap();
        assert!(matches!(
            fb.pseudo_inverse(),
            Err(DspError::DegenerateFilterbank { n_mels: 80, .. })
        ));
        let long = short.with_fft_len(1024).unwrap();
        assert!(mel_filterbank(80, &long, 16000, 80.0, 7600.0)
            .unwrap()
            .pseudo_inverse()
            .is_ok());
    }

    #[test]
    fn duplicate_filters_are_reported_degenerate() {
        let cfg = asv_cfg();
        let mut fb = mel_filterbank(8, &cfg, 16000, 0.0, 8000.0).unwrap();
        let first = fb.weights.row(0).to_vec();
        fb.weights.row_mut(1).copy_from_slice(&first);
        assert!(matches!(
            fb.pseudo_inverse(),
            Err(DspError::DegenerateFilterbank { rank: 7, n_mels: 8 })
        ));
    }
}
