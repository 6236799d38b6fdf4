//! Re-synthesis transforms `x -> x'` applied before re-scoring.
//!
//! Every method returns exactly `len(x)` samples in `[-1, 1]`: longer
//! reconstructions are trimmed at the tail and shorter ones zero-padded.

mod bridge;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bridge::{external_vocoder_bridge, BridgeError, VocoderCommand, DEFAULT_TIMEOUT_SECS};

use crate::dsp::{
    gaussian_filter, griffin_lim_with_len, lin_to_mel, mel_filterbank, DspError, MelFilterbank,
    MelInverse, StftConfig, StftPlan, Waveform, WindowKind,
};

pub const DEFAULT_GL_ITERATIONS: usize = 100;

/// 20 ms Hann window with 75% overlap at 16 kHz.
pub fn default_gl_stft() -> StftConfig {
    StftConfig::new(320, 80, WindowKind::Hann).expect("valid default STFT config")
}

#[derive(Debug, Error)]
pub enum ResynthError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ResynthMethod {
    Identity,
    #[serde(rename = "gl-lin")]
    GriffinLimLinear {
        stft: StftConfig,
        n_iter: usize,
    },
    #[serde(rename = "gl-mel")]
    GriffinLimMel {
        stft: StftConfig,
        n_mels: usize,
        fmin: f64,
        fmax: f64,
        n_iter: usize,
    },
    #[serde(rename = "gaussian")]
    GaussianFilter {
        sigma: f64,
    },
    #[serde(rename = "vocoder")]
    ExternalVocoder(VocoderCommand),
}

impl ResynthMethod {
    pub fn gl_lin() -> Self {
        Self::GriffinLimLinear {
            stft: default_gl_stft(),
            n_iter: DEFAULT_GL_ITERATIONS,
        }
    }

    /// 64 mels over 0-8000 Hz, matching the ASV front end.
    pub fn gl_mel() -> Self {
        Self::GriffinLimMel {
            stft: default_gl_stft(),
            n_mels: 64,
            fmin: 0.0,
            fmax: 8000.0,
            n_iter: DEFAULT_GL_ITERATIONS,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self::GaussianFilter { sigma }
    }

    pub fn vocoder(cmd: VocoderCommand) -> Self {
        Self::ExternalVocoder(cmd)
    }

    /// Short label used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::GriffinLimLinear { .. } => "gl-lin",
            Self::GriffinLimMel { .. } => "gl-mel",
            Self::GaussianFilter { .. } => "gaussian",
            Self::ExternalVocoder(_) => "vocoder",
        }
    }
}

impl fmt::Display for ResynthMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-method state prepared once per sample rate (filterbank pseudo-inverse, FFT plans).
#[derive(Debug, Clone)]
pub struct Resynthesizer {
    method: ResynthMethod,
    sample_rate: u32,
    mel: Option<(MelFilterbank, MelInverse)>,
}

impl Resynthesizer {
    pub fn new(method: ResynthMethod, sample_rate: u32) -> Result<Self, ResynthError> {
        let mel = match &method {
            ResynthMethod::GriffinLimMel {
                stft,
                n_mels,
                fmin,
                fmax,
                n_iter,
            } => {
                check_iterations(*n_iter)?;
                stft.check_cola()?;
                let fb = mel_filterbank(*n_mels, stft, sample_rate, *fmin, *fmax)?;
                let inv = MelInverse::new(&fb)?;
                Some((fb, inv))
            }
            ResynthMethod::GriffinLimLinear { stft, n_iter } => {
                check_iterations(*n_iter)?;
                stft.check_cola()?;
                None
            }
            ResynthMethod::GaussianFilter { sigma } => {
                crate::dsp::gaussian_kernel(*sigma)?;
                None
            }
            ResynthMethod::Identity | ResynthMethod::ExternalVocoder(_) => None,
        };
        Ok(Self {
            method,
            sample_rate,
            mel,
        })
    }

    pub fn method(&self) -> &ResynthMethod {
        &self.method
    }

    pub fn apply(&self, x: &Waveform) -> Result<Waveform, ResynthError> {
        Ok(self.apply_batch(std::slice::from_ref(x))?.remove(0))
    }

    /// Re-synthesizes a batch; the external vocoder sees the whole batch in one call.
    pub fn apply_batch(&self, xs: &[Waveform]) -> Result<Vec<Waveform>, ResynthError> {
        if let Some(x) = xs.iter().find(|x| x.sample_rate() != self.sample_rate) {
            return Err(DspError::InvalidConfig(format!(
                "waveform at {} Hz given to a {} Hz re-synthesizer",
                x.sample_rate(),
                self.sample_rate
            ))
            .into());
        }
        let raw = match &self.method {
            ResynthMethod::ExternalVocoder(cmd) if !xs.is_empty() => {
                external_vocoder_bridge(xs, cmd)?
            }
            _ => xs
                .par_iter()
                .map(|x| self.apply_one(x))
                .collect::<Result<Vec<_>, _>>()?,
        };
        raw.into_iter()
            .zip(xs)
            .map(|(y, x)| restore(y, x.len()))
            .collect()
    }

    fn apply_one(&self, x: &Waveform) -> Result<Waveform, ResynthError> {
        Ok(match &self.method {
            ResynthMethod::Identity | ResynthMethod::ExternalVocoder(_) => x.clone(),
            ResynthMethod::GriffinLimLinear { stft, n_iter } => {
                let mag = StftPlan::new(*stft)?.forward(x)?.magnitude();
                griffin_lim_with_len(&mag, *n_iter, x.len())?.waveform
            }
            ResynthMethod::GriffinLimMel { stft, n_iter, .. } => {
                let (fb, inv) = self.mel.as_ref().expect("prepared in new");
                let mag = StftPlan::new(*stft)?.forward(x)?.magnitude();
                let linear = inv.apply(&lin_to_mel(&mag, fb)?)?;
                griffin_lim_with_len(&linear, *n_iter, x.len())?.waveform
            }
            ResynthMethod::GaussianFilter { sigma } => gaussian_filter(x, *sigma)?,
        })
    }
}

fn check_iterations(n_iter: usize) -> Result<(), DspError> {
    if n_iter == 0 {
        Err(DspError::ZeroIterations)
    } else {
        Ok(())
    }
}

/// Trim or zero-pad to `len`, then clamp to `[-1, 1]`.
fn restore(y: Waveform, len: usize) -> Result<Waveform, ResynthError> {
    let sr = y.sample_rate();
    let mut samples = y.into_samples();
    samples.resize(len, 0.0);
    Ok(Waveform::clamped(samples, sr)?)
}

/// One-shot re-synthesis of `x`.
pub fn resynthesize(x: &Waveform, method: &ResynthMethod) -> Result<Waveform, ResynthError> {
    Resynthesizer::new(method.clone(), x.sample_rate())?.apply(x)
}
