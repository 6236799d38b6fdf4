use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{reflect_index, DspError, FrameMatrix, Waveform};

/// Relative tolerance on the squared-window overlap sum.
const COLA_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Hann,
    Rectangular,
}

impl WindowKind {
    /// Periodic (DFT-even) window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n;
                match self {
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowKind::Hamming => "hamming",
            WindowKind::Hann => "hann",
            WindowKind::Rectangular => "rectangular",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop_len: usize,
    pub fft_len: usize,
    pub window: WindowKind,
    pub center: bool,
}

impl StftConfig {
    /// Centered config with `fft_len` the smallest power of two `>= window_len`.
    pub fn new(window_len: usize, hop_len: usize, window: WindowKind) -> Result<Self, DspError> {
        let cfg = Self {
            window_len,
            hop_len,
            fft_len: window_len.max(1).next_power_of_two(),
            window,
            center: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_millis(
        sample_rate: u32,
        window_ms: f64,
        hop_ms: f64,
        window: WindowKind,
    ) -> Result<Self, DspError> {
        let to_samples = |ms: f64| (ms * sample_rate as f64 / 1000.0).round() as usize;
        Self::new(to_samples(window_ms), to_samples(hop_ms), window)
    }

    pub fn with_fft_len(mut self, fft_len: usize) -> Result<Self, DspError> {
        self.fft_len = fft_len;
        self.validate()?;
        Ok(self)
    }

    pub fn with_center(mut self, center: bool) -> Self {
        self.center = center;
        self
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.hop_len == 0 {
            return Err(DspError::InvalidConfig("hop_len must be positive".into()));
        }
        if self.hop_len > self.window_len {
            return Err(DspError::InvalidConfig(format!(
                "hop_len {} exceeds window_len {}",
                self.hop_len, self.window_len
            )));
        }
        if self.window_len > self.fft_len {
            return Err(DspError::InvalidConfig(format!(
                "window_len {} exceeds fft_len {}",
                self.window_len, self.fft_len
            )));
        }
        if self.fft_len % 2 != 0 {
            return Err(DspError::InvalidConfig("fft_len must be even".into()));
        }
        Ok(())
    }

    /// Relative deviation `(max - min) / max` of the squared-window overlap
    /// sum over one hop period.
    pub fn overlap_deviation(&self) -> f64 {
        let w = self.window.coefficients(self.window_len);
        let sums: Vec<f64> = (0..self.hop_len)
            .map(|n| w.iter().skip(n).step_by(self.hop_len).map(|v| v * v).sum())
            .collect();
        let max = sums.iter().copied().fold(f64::MIN, f64::max);
        let min = sums.iter().copied().fold(f64::MAX, f64::min);
        if max <= 0.0 {
            return f64::INFINITY;
        }
        (max - min) / max
    }

    /// Checks that the window/hop pair admits exact weighted overlap-add inversion.
    pub fn check_cola(&self) -> Result<(), DspError> {
        self.validate()?;
        let deviation = self.overlap_deviation();
        if deviation > COLA_TOLERANCE {
            return Err(DspError::NonCola { deviation });
        }
        Ok(())
    }

    pub(crate) fn pad_len(&self) -> usize {
        if self.center {
            self.window_len / 2
        } else {
            0
        }
    }

    pub fn n_frames(&self, signal_len: usize) -> Result<usize, DspError> {
        if signal_len == 0 {
            return Err(DspError::EmptyWaveform);
        }
        if self.center {
            Ok(1 + signal_len / self.hop_len)
        } else if signal_len < self.window_len {
            Err(DspError::TooShort {
                len: signal_len,
                window: self.window_len,
            })
        } else {
            Ok(1 + (signal_len - self.window_len) / self.hop_len)
        }
    }

    /// Samples emitted by the inverse transform for `n_frames` frames.
    pub fn output_len(&self, n_frames: usize) -> usize {
        if self.center {
            n_frames * self.hop_len
        } else {
            (n_frames - 1) * self.hop_len + self.window_len
        }
    }

    /// Length of the padded signal covered by `n_frames` frames.
    pub(crate) fn span_len(&self, n_frames: usize) -> usize {
        (n_frames - 1) * self.hop_len + self.window_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: FrameMatrix<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.cols()
    }

    pub fn magnitude(&self) -> MagSpectrogram {
        MagSpectrogram {
            values: self.frames.map(|c| c.norm()),
            config: self.config,
            sample_rate: self.sample_rate,
        }
    }

    pub fn power(&self) -> FrameMatrix<f64> {
        self.frames.map(|c| c.norm_sqr())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagSpectrogram {
    pub values: FrameMatrix<f64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl MagSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.values.cols()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values
            .as_slice()
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Reusable transform state for one [`StftConfig`].
#[derive(Clone)]
pub struct StftPlan {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StftPlan")
            .field("config", &self.config)
            .finish()
    }
}

impl StftPlan {
    pub fn new(config: StftConfig) -> Result<Self, DspError> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            config,
            window: config.window.coefficients(config.window_len),
            forward: planner.plan_fft_forward(config.fft_len),
            inverse: planner.plan_fft_inverse(config.fft_len),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub(crate) fn inverse_fft(&self) -> &Arc<dyn Fft<f64>> {
        &self.inverse
    }

    /// Signal as seen by the frames: reflect-padded when centered.
    pub fn padded(&self, x: &[f64]) -> Result<(Vec<f64>, usize), DspError> {
        let n_frames = self.config.n_frames(x.len())?;
        let pad = self.config.pad_len() as isize;
        let span = self.config.span_len(n_frames);
        let padded = (0..span as isize)
            .map(|p| x[reflect_index(p - pad, x.len())])
            .collect();
        Ok((padded, n_frames))
    }

    /// Analyzes `n_frames` frames of an already padded signal.
    pub fn analyze_padded(&self, padded: &[f64], n_frames: usize) -> FrameMatrix<Complex64> {
        let mut out = FrameMatrix::filled(n_frames, self.config.n_bins(), Complex64::new(0.0, 0.0));
        self.analyze_padded_into(padded, &mut out);
        out
    }

    /// [`analyze_padded`](Self::analyze_padded) into an existing matrix; its row count sets the frame count.
    pub fn analyze_padded_into(&self, padded: &[f64], out: &mut FrameMatrix<Complex64>) {
        let cfg = &self.config;
        let n_bins = cfg.n_bins();
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..out.rows() {
            let seg = &padded[t * cfg.hop_len..t * cfg.hop_len + cfg.window_len];
            for (b, (s, w)) in buf.iter_mut().zip(seg.iter().zip(&self.window)) {
                *b = Complex64::new(s * w, 0.0);
            }
            buf[cfg.window_len..].fill(Complex64::new(0.0, 0.0));
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            out.row_mut(t).copy_from_slice(&buf[..n_bins]);
        }
    }

    pub fn forward(&self, x: &Waveform) -> Result<ComplexSpectrogram, DspError> {
        let (padded, n_frames) = self.padded(x.samples())?;
        Ok(ComplexSpectrogram {
            frames: self.analyze_padded(&padded, n_frames),
            config: self.config,
            sample_rate: x.sample_rate(),
        })
    }

    /// Unnormalized overlap-add `sum_t w * ifft(X_t)` and `sum_t w^2` over the padded span.
    fn accumulate(
        &self,
        frames: &FrameMatrix<Complex64>,
    ) -> Result<(Vec<f64>, Vec<f64>), DspError> {
        let cfg = &self.config;
        if frames.cols() != cfg.n_bins() {
            return Err(DspError::ShapeMismatch {
                expected: cfg.n_bins(),
                got: frames.cols(),
            });
        }
        let n_frames = frames.rows();
        if n_frames == 0 {
            return Err(DspError::EmptyWaveform);
        }
        let span = cfg.span_len(n_frames);
        let mut acc = vec![0.0; span];
        let mut norm = vec![0.0; span];
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / cfg.fft_len as f64;
        let half = cfg.fft_len / 2;
        for t in 0..n_frames {
            let row = frames.row(t);
            buf[0] = Complex64::new(row[0].re, 0.0);
            buf[half] = Complex64::new(row[half].re, 0.0);
            for k in 1..half {
                buf[k] = row[k];
                buf[cfg.fft_len - k] = row[k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * cfg.hop_len;
            for (n, w) in self.window.iter().enumerate() {
                acc[start + n] += w * buf[n].re * scale;
                norm[start + n] += w * w;
            }
        }
        Ok((acc, norm))
    }

    fn normalize(mut acc: Vec<f64>, norm: &[f64]) -> Vec<f64> {
        let floor = norm.iter().copied().fold(0.0, f64::max) * 1e-10;
        for (a, d) in acc.iter_mut().zip(norm) {
            *a = if *d > floor { *a / d } else { 0.0 };
        }
        acc
    }

    /// Least-squares inverse in the padded domain: `sum_t w * ifft(X_t) / sum_t w^2`.
    ///
    /// Positions where the squared-window sum vanishes are set to zero.
    pub fn overlap_add(&self, frames: &FrameMatrix<Complex64>) -> Result<Vec<f64>, DspError> {
        let (acc, norm) = self.accumulate(frames)?;
        Ok(Self::normalize(acc, &norm))
    }

    /// Least-squares inverse over signals of length `out_len` whose padded
    /// form is analyzed by the frames: numerator and window energy from the
    /// padding are folded back onto the samples they mirror.
    pub fn folded_overlap_add(
        &self,
        frames: &FrameMatrix<Complex64>,
        out_len: usize,
    ) -> Result<Vec<f64>, DspError> {
        if out_len == 0 {
            return Err(DspError::EmptyWaveform);
        }
        let (acc, norm) = self.accumulate(frames)?;
        let pad = self.config.pad_len() as isize;
        let mut num = vec![0.0; out_len];
        let mut den = vec![0.0; out_len];
        for (p, (a, d)) in acc.iter().zip(&norm).enumerate() {
            let j = p as isize - pad;
            if !self.config.center && j >= out_len as isize {
                continue;
            }
            let i = reflect_index(j, out_len);
            num[i] += a;
            den[i] += d;
        }
        Ok(Self::normalize(num, &den))
    }

    /// Inverse transform without clamping, cropped to [`StftConfig::output_len`].
    pub fn inverse_unclamped(&self, frames: &FrameMatrix<Complex64>) -> Result<Vec<f64>, DspError> {
        let padded = self.overlap_add(frames)?;
        Ok(self.crop(&padded, frames.rows()))
    }

    pub(crate) fn crop(&self, padded: &[f64], n_frames: usize) -> Vec<f64> {
        let pad = self.config.pad_len();
        (0..self.config.output_len(n_frames))
            .map(|j| padded.get(j + pad).copied().unwrap_or(0.0))
            .collect()
    }
}

/// Short-time Fourier transform of `x` (one-sided, `fft_len / 2 + 1` bins).
pub fn stft(x: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram, DspError> {
    StftPlan::new(*cfg)?.forward(x)
}

/// Inverse STFT before the final clamp; useful for linearity checks.
pub fn istft_unclamped(spec: &ComplexSpectrogram) -> Result<Vec<f64>, DspError> {
    spec.config.check_cola()?;
    StftPlan::new(spec.config)?.inverse_unclamped(&spec.frames)
}

/// Inverse STFT by weighted overlap-add, clamped to `[-1, 1]` on emission.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform, DspError> {
    Waveform::clamped(istft_unclamped(spec)?, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64, amp: f64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new(
            (0..len).map(|_| rng.random_range(-amp..amp)).collect(),
            16000,
        )
        .unwrap()
    }

    /// Direct O(N^2) DFT of one windowed frame.
    fn naive_dft(frame: &[f64], fft_len: usize) -> Vec<Complex64> {
        (0..=fft_len / 2)
            .map(|k| {
                frame
                    .iter()
                    .enumerate()
                    .fold(Complex64::new(0.0, 0.0), |acc, (n, x)| {
                        let theta = -2.0 * PI * (k * n) as f64 / fft_len as f64;
                        acc + Complex64::from_polar(*x, theta)
                    })
            })
            .collect()
    }

    #[test]
    fn zero_signal_gives_zero_spectrum_with_101_frames() {
        let cfg = StftConfig::new(400, 160, WindowKind::Hamming).unwrap();
        assert_eq!(cfg.fft_len, 512);
        let spec = stft(&Waveform::zeros(16000, 16000).unwrap(), &cfg).unwrap();
        assert_eq!(spec.n_frames(), 101);
        assert_eq!(spec.n_bins(), 257);
        assert!(spec.frames.as_slice().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn bin_centered_sinusoid_concentrates_in_one_bin() {
        // Rectangular window spanning whole periods: |X_62| = N/2 exactly.
        let cfg = StftConfig::new(512, 128, WindowKind::Rectangular).unwrap();
        let f = 62.0 * 16000.0 / 512.0;
        let x: Vec<f64> = (0..4096)
            .map(|n| (2.0 * PI * f * n as f64 / 16000.0).cos())
            .collect();
        let spec = stft(&Waveform::new(x, 16000).unwrap(), &cfg).unwrap();
        let pad_frames = 2; // frames touching the reflect padding
        for t in pad_frames..spec.n_frames() - pad_frames - 2 {
            let row = spec.frames.row(t);
            assert!(
                (row[62].norm() - 256.0).abs() < 1e-9,
                "frame {t}: {}",
                row[62].norm()
            );
            for (k, c) in row.iter().enumerate() {
                if k != 62 {
                    assert!(c.norm() < 1e-9, "frame {t} bin {k}: {}", c.norm());
                }
            }
        }
    }

    #[test]
    fn frames_match_naive_dft() {
        let cfg = StftConfig::new(400, 160, WindowKind::Hamming).unwrap();
        let x = noise(1200, 3, 0.5);
        let plan = StftPlan::new(cfg).unwrap();
        let (padded, n_frames) = plan.padded(x.samples()).unwrap();
        let spec = plan.forward(&x).unwrap();
        for t in [0, 3, n_frames - 1] {
            let frame: Vec<f64> = padded[t * 160..t * 160 + 400]
                .iter()
                .zip(plan.window())
                .map(|(s, w)| s * w)
                .collect();
            let reference = naive_dft(&frame, 512);
            for (a, b) in spec.frames.row(t).iter().zip(&reference) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn round_trip_restores_signal() {
        for (win, hop, kind) in [
            (400, 100, WindowKind::Hann),
            (400, 100, WindowKind::Hamming),
            (512, 128, WindowKind::Hann),
            (800, 200, WindowKind::Hann),
            (256, 128, WindowKind::Rectangular),
        ] {
            let cfg = StftConfig::new(win, hop, kind).unwrap();
            cfg.check_cola().unwrap();
            let x = noise(5000, 11, 0.9);
            let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
            assert_eq!(y.len(), cfg.output_len(1 + 5000 / hop));
            let err = x
                .samples()
                .iter()
                .zip(y.samples())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "{win}/{hop}/{kind}: {err}");
        }
    }

    #[test]
    fn istft_rejects_non_cola_config() {
        let cfg = StftConfig::new(400, 160, WindowKind::Hamming).unwrap();
        let spec = stft(&noise(2000, 1, 0.1), &cfg).unwrap();
        assert!(matches!(istft(&spec), Err(DspError::NonCola { .. })));
    }

    #[test]
    fn istft_is_linear_before_clamp() {
        let cfg = StftConfig::new(400, 100, WindowKind::Hann).unwrap();
        let x = noise(3000, 5, 0.8);
        let mut spec = stft(&x, &cfg).unwrap();
        for c in spec.frames.as_mut_slice() {
            *c *= 2.0;
        }
        let y = istft_unclamped(&spec).unwrap();
        for (a, b) in x.samples().iter().zip(&y) {
            assert!((2.0 * a - b).abs() < 1e-6);
        }
        let clamped = istft(&spec).unwrap();
        assert!(clamped.samples().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn zero_spectrum_inverts_to_silence() {
        let cfg = StftConfig::new(400, 100, WindowKind::Hann).unwrap();
        let spec = ComplexSpectrogram {
            frames: FrameMatrix::filled(11, 257, Complex64::new(0.0, 0.0)),
            config: cfg,
            sample_rate: 16000,
        };
        let y = istft(&spec).unwrap();
        assert_eq!(y.len(), 1100);
        assert!(y.samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(StftConfig::new(400, 0, WindowKind::Hann).is_err());
        assert!(StftConfig::new(400, 401, WindowKind::Hann).is_err());
        let cfg = StftConfig::new(400, 100, WindowKind::Hann).unwrap();
        assert!(cfg.with_fft_len(256).is_err());
        assert_eq!(
            stft(
                &Waveform::zeros(10, 16000).unwrap(),
                &cfg.with_center(false)
            ),
            Err(DspError::TooShort {
                len: 10,
                window: 400
            })
        );
    }

    #[test]
    fn stft_is_deterministic() {
        let cfg = StftConfig::new(400, 160, WindowKind::Hamming).unwrap();
        let x = noise(3000, 9, 0.5);
        assert_eq!(stft(&x, &cfg).unwrap(), stft(&x, &cfg).unwrap());
    }
}
