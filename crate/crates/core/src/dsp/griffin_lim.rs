use rustfft::num_complex::Complex64;

use super::{DspError, FrameMatrix, MagSpectrogram, StftPlan, Waveform};

/// Output of [`griffin_lim_traced`].
#[derive(Debug, Clone)]
pub struct GriffinLimTrace {
    pub waveform: Waveform,
    /// Spectral-convergence error after each iteration.
    pub convergence: Vec<f64>,
}

/// Griffin-Lim phase reconstruction from zero initial phase.
pub fn griffin_lim(mag: &MagSpectrogram, n_iter: usize) -> Result<Waveform, DspError> {
    griffin_lim_traced(mag, n_iter).map(|t| t.waveform)
}

/// [`griffin_lim`], also returning the error curve.
///
/// The estimate is a signal of [`output_len`](super::StftConfig::output_len)
/// samples; see [`griffin_lim_with_len`] to fix another length.
pub fn griffin_lim_traced(
    mag: &MagSpectrogram,
    n_iter: usize,
) -> Result<GriffinLimTrace, DspError> {
    griffin_lim_with_len(mag, n_iter, mag.config.output_len(mag.n_frames()))
}

/// Griffin-Lim over signals of exactly `len` samples.
///
/// A signal of `len` samples must span `mag.n_frames()` frames, or one more. Each inverse step is the
/// least-squares fit through the padding, so the error never increases and
/// the returned waveform is the final iterate.
pub fn griffin_lim_with_len(
    mag: &MagSpectrogram,
    n_iter: usize,
    len: usize,
) -> Result<GriffinLimTrace, DspError> {
    if n_iter == 0 {
        return Err(DspError::ZeroIterations);
    }
    if mag
        .values
        .as_slice()
        .iter()
        .any(|v| !(*v >= 0.0) || !v.is_finite())
    {
        return Err(DspError::NegativeMagnitude);
    }
    let cfg = mag.config;
    cfg.check_cola()?;
    if mag.n_bins() != cfg.n_bins() {
        return Err(DspError::ShapeMismatch {
            expected: cfg.n_bins(),
            got: mag.n_bins(),
        });
    }
    let n_frames = mag.n_frames();
    if n_frames == 0 {
        return Err(DspError::EmptyWaveform);
    }
    let len_frames = if len == 0 {
        0
    } else {
        cfg.n_frames(len).unwrap_or(0)
    };
    if len_frames != n_frames && len_frames != n_frames + 1 {
        return Err(DspError::ShapeMismatch {
            expected: n_frames,
            got: len_frames,
        });
    }
    let plan = StftPlan::new(cfg)?;
    let target = mag.values.as_slice();
    let target_norm = mag.frobenius_norm();

    let mut spec = FrameMatrix::from_vec(
        n_frames,
        cfg.n_bins(),
        target.iter().map(|m| Complex64::new(*m, 0.0)).collect(),
    )?;
    let mut convergence = Vec::with_capacity(n_iter);
    let mut signal = Vec::new();
    let mut rebuilt = spec.clone();
    for _ in 0..n_iter {
        signal = plan.folded_overlap_add(&spec, len)?;
        let (padded, _) = plan.padded(&signal)?;
        plan.analyze_padded_into(&padded, &mut rebuilt);
        let mut err = 0.0;
        for ((s, x), m) in spec
            .as_mut_slice()
            .iter_mut()
            .zip(rebuilt.as_slice())
            .zip(target)
        {
            let norm = x.norm_sqr().sqrt();
            err += (norm - m).powi(2);
            *s = if norm > 0.0 {
                x * (m / norm)
            } else {
                Complex64::new(*m, 0.0)
            };
        }
        convergence.push(if target_norm > 0.0 {
            err.sqrt() / target_norm
        } else {
            0.0
        });
    }
    let waveform = Waveform::clamped(signal, mag.sample_rate)?;
    Ok(GriffinLimTrace {
        waveform,
        convergence,
    })
}

/// `||(|STFT(x)| - M)||_F / ||M||_F` over the first `M.n_frames()` frames.
pub fn spectral_convergence(x: &Waveform, target: &MagSpectrogram) -> Result<f64, DspError> {
    let plan = StftPlan::new(target.config)?;
    let spec = plan.forward(x)?;
    if spec.n_frames() < target.n_frames() {
        return Err(DspError::ShapeMismatch {
            expected: target.n_frames(),
            got: spec.n_frames(),
        });
    }
    let n = target.n_frames() * target.n_bins();
    let num: f64 = spec.frames.as_slice()[..n]
        .iter()
        .zip(target.values.as_slice())
        .map(|(c, m)| (c.norm() - m).powi(2))
        .sum();
    let den = target.frobenius_norm();
    Ok(if den > 0.0 {
        num.sqrt() / den
    } else {
        num.sqrt()
    })
}
