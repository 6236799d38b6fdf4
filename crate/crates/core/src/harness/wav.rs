use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dsp::{DspError, Waveform};

const SCALE: f64 = 32768.0;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: expected mono audio, found {channels} channels")]
    Channels { path: PathBuf, channels: u16 },
    #[error("{path}: expected 16-bit integer PCM, found {bits}-bit {format}")]
    NotPcm16 {
        path: PathBuf,
        bits: u16,
        format: &'static str,
    },
    #[error("{path}: malformed WAV file: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Samples {
        path: PathBuf,
        #[source]
        source: DspError,
    },
}

fn malformed(path: &Path, reason: impl Into<String>) -> WavError {
    WavError::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn from_hound(path: &Path, err: hound::Error) -> WavError {
    match err {
        hound::Error::IoError(e) => WavError::Io {
            path: path.to_path_buf(),
            source: e,
        },
        other => malformed(path, other.to_string()),
    }
}

/// Reads a mono PCM16 file; samples are scaled by `1 / 32768`.
pub fn load_wav(path: &Path) -> Result<Waveform, WavError> {
    let file = File::open(path).map_err(|source| WavError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    // the file is readable, so any failure from here on is in its contents
    let reader =
        hound::WavReader::new(BufReader::new(file)).map_err(|e| malformed(path, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::Channels {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(WavError::NotPcm16 {
            path: path.to_path_buf(),
            bits: spec.bits_per_sample,
            format: match spec.sample_format {
                hound::SampleFormat::Int => "integer",
                hound::SampleFormat::Float => "float",
            },
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / SCALE))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| malformed(path, e.to_string()))?;
    if samples.is_empty() {
        return Err(malformed(path, "no samples"));
    }
    Waveform::new(samples, spec.sample_rate).map_err(|source| WavError::Samples {
        path: path.to_path_buf(),
        source,
    })
}

/// PCM16 value for a normalized sample: clamp, scale, round half away from zero.
pub fn quantize_sample(v: f64) -> i16 {
    (v.clamp(-1.0, 1.0) * SCALE)
        .round()
        .clamp(-SCALE, SCALE - 1.0) as i16
}

/// Writes `x` as mono PCM16.
pub fn save_wav(path: &Path, x: &Waveform) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: x.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| from_hound(path, e))?;
    for v in x.samples() {
        writer
            .write_sample(quantize_sample(*v))
            .map_err(|e| from_hound(path, e))?;
    }
    writer.finalize().map_err(|e| from_hound(path, e))
}

/// `x` as it reads back after a PCM16 round trip.
pub fn pcm16_round_trip(x: &Waveform) -> Waveform {
    let q = x
        .samples()
        .iter()
        .map(|v| quantize_sample(*v) as f64 / SCALE)
        .collect();
    Waveform::new(q, x.sample_rate()).expect("quantized samples are finite")
}
