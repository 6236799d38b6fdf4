//! Spectral analysis and synthesis primitives.
//!
//! Everything here is a pure function of its inputs. Samples are `f64`
//! amplitudes normalized to `[-1, 1]`.

mod filter;
mod griffin_lim;
mod mel;
mod stft;

pub use filter::{gaussian_filter, gaussian_kernel};
pub use griffin_lim::{
    griffin_lim, griffin_lim_traced, griffin_lim_with_len, spectral_convergence, GriffinLimTrace,
};
pub use mel::{
    hz_to_mel, lin_to_mel, mel_filterbank, mel_to_hz, mel_to_linear_pinv, MelFilterbank,
    MelInverse, MelSpectrogram, RANK_RTOL,
};
pub use stft::{
    istft, istft_unclamped, stft, ComplexSpectrogram, MagSpectrogram, StftConfig, StftPlan,
    WindowKind,
};

use thiserror::Error;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("waveform is empty")]
    EmptyWaveform,
    #[error("waveform contains a non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("invalid STFT config: {0}")]
    InvalidConfig(String),
    #[error(
        "window/hop pair violates the overlap-add condition (relative deviation {deviation:.3e})"
    )]
    NonCola { deviation: f64 },
    #[error("signal of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("shape mismatch: expected {expected} columns, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid mel band: {0}")]
    InvalidBand(String),
    #[error("mel filter {0} has no positive weight; use fewer mels or a longer FFT")]
    EmptyFilter(usize),
    #[error("mel filterbank is rank deficient: rank {rank} < {n_mels} mels")]
    DegenerateFilterbank { rank: usize, n_mels: usize },
    #[error("Gaussian sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("Griffin-Lim needs at least one iteration")]
    ZeroIterations,
    #[error("magnitude spectrogram has a negative or non-finite entry")]
    NegativeMagnitude,
}

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Wraps `samples` without clamping. Rejects empty or non-finite input.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        if samples.is_empty() {
            return Err(DspError::EmptyWaveform);
        }
        if sample_rate == 0 {
            return Err(DspError::ZeroSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Like [`Waveform::new`], with every sample clamped to `[-1, 1]`.
    pub fn clamped(mut samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Self::new(samples, sample_rate)
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self, DspError> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false for a constructed waveform; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Trims or zero-pads the tail to exactly `len` samples.
    pub fn with_len(mut self, len: usize) -> Result<Self, DspError> {
        self.samples.resize(len, 0.0);
        Self::new(self.samples, self.sample_rate)
    }

    pub fn max_abs_diff(&self, other: &Waveform) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Dense row-major matrix with one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix<T> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Clone> FrameMatrix<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            data: vec![value; rows * cols],
            rows,
            cols,
        }
    }
}

impl<T> FrameMatrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, DspError> {
        if data.len() != rows * cols {
            return Err(DspError::ShapeMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> FrameMatrix<U> {
        FrameMatrix {
            data: self.data.iter().map(f).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }
}

impl<T: Copy> FrameMatrix<T> {
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}

/// Mirror index into `0..len` without repeating the edge sample (`d c b | a b c d`).
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_index_mirrors_without_edge_repeat() {
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn waveform_rejects_empty_and_nan() {
        assert_eq!(Waveform::new(vec![], 16000), Err(DspError::EmptyWaveform));
        assert_eq!(
            Waveform::new(vec![0.0, f64::NAN], 16000),
            Err(DspError::NonFiniteSample(1))
        );
    }

    #[test]
    fn with_len_trims_and_pads() {
        let w = Waveform::new(vec![0.1, 0.2, 0.3], 8000).unwrap();
        assert_eq!(w.clone().with_len(2).unwrap().samples(), &[0.1, 0.2]);
        assert_eq!(w.with_len(5).unwrap().samples(), &[0.1, 0.2, 0.3, 0.0, 0.0]);
    }
}
