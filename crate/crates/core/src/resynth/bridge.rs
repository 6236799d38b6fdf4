//! Subprocess protocol for external vocoders.
//!
//! The bridge writes every input as `in/<index>.wav` (mono PCM16) in a fresh
//! temporary directory and runs
//!
//! ```text
//! <program> <args...> --in-dir <dir>/in --out-dir <dir>/out --sample-rate <sr>
//! ```
//!
//! The command must exit with status 0 and leave exactly one
//! `out/<index>.wav` per input at the same sample rate. Output length is free;
//! callers restore it.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::dsp::Waveform;
use crate::harness::wav::{load_wav, save_wav, WavError};

pub const DEFAULT_TIMEOUT_SECS: u64 = 600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocoderCommand {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

impl VocoderCommand {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn with_args<I, S>(mut self, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.args = args.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_timeout(mut self, secs: u64) -> Self {
        self.timeout_secs = secs;
        self
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("no inputs given to the vocoder bridge")]
    EmptyBatch,
    #[error("inputs mix sample rates {0} and {1}")]
    MixedSampleRates(u32, u32),
    #[error("bridge I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to start {program}: {source}")]
    Spawn {
        program: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vocoder did not finish within {secs} s")]
    Timeout { secs: u64 },
    #[error("vocoder exited with {status}: {stderr}")]
    Exit { status: String, stderr: String },
    #[error("vocoder produced no output for index {0}")]
    MissingOutput(usize),
    #[error("vocoder produced unexpected file {0}")]
    UnexpectedOutput(String),
    #[error("output {index} has sample rate {got}, expected {expected}")]
    SampleRate {
        index: usize,
        expected: u32,
        got: u32,
    },
    #[error(transparent)]
    Wav(#[from] WavError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BridgeError + '_ {
    move |source| BridgeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs one batch through the external command; outputs keep input order.
pub fn external_vocoder_bridge(
    inputs: &[Waveform],
    cmd: &VocoderCommand,
) -> Result<Vec<Waveform>, BridgeError> {
    let first = inputs.first().ok_or(BridgeError::EmptyBatch)?;
    let sr = first.sample_rate();
    if let Some(x) = inputs.iter().find(|x| x.sample_rate() != sr) {
        return Err(BridgeError::MixedSampleRates(sr, x.sample_rate()));
    }

    let tmp = tempfile::tempdir().map_err(io_err(Path::new("<tempdir>")))?;
    let in_dir = tmp.path().join("in");
    let out_dir = tmp.path().join("out");
    fs::create_dir(&in_dir).map_err(io_err(&in_dir))?;
    fs::create_dir(&out_dir).map_err(io_err(&out_dir))?;
    for (i, x) in inputs.iter().enumerate() {
        save_wav(&in_dir.join(format!("{i}.wav")), x)?;
    }

    let stderr_path = tmp.path().join("stderr.log");
    let stderr_file = File::create(&stderr_path).map_err(io_err(&stderr_path))?;
    let mut child = Command::new(&cmd.program)
        .args(&cmd.args)
        .arg("--in-dir")
        .arg(&in_dir)
        .arg("--out-dir")
        .arg(&out_dir)
        .arg("--sample-rate")
        .arg(sr.to_string())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(stderr_file)
        .spawn()
        .map_err(|source| BridgeError::Spawn {
            program: cmd.program.clone(),
            source,
        })?;
    let status = match child
        .wait_timeout(Duration::from_secs(cmd.timeout_secs))
        .map_err(io_err(&cmd.program))?
    {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(BridgeError::Timeout {
                secs: cmd.timeout_secs,
            });
        }
    };
    if !status.success() {
        let stderr = fs::read_to_string(&stderr_path).unwrap_or_default();
        return Err(BridgeError::Exit {
            status: status.to_string(),
            stderr: stderr.trim().to_string(),
        });
    }

    let mut names: Vec<String> = fs::read_dir(&out_dir)
        .map_err(io_err(&out_dir))?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()
        .map_err(io_err(&out_dir))?;
    names.sort();
    let expected: Vec<String> = (0..inputs.len()).map(|i| format!("{i}.wav")).collect();
    if let Some(extra) = names.iter().find(|n| !expected.contains(n)) {
        return Err(BridgeError::UnexpectedOutput(extra.clone()));
    }
    expected
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let path = out_dir.join(name);
            if !path.is_file() {
                return Err(BridgeError::MissingOutput(i));
            }
            let y = load_wav(&path)?;
            if y.sample_rate() != sr {
                return Err(BridgeError::SampleRate {
                    index: i,
                    expected: sr,
                    got: y.sample_rate(),
                });
            }
            Ok(y)
        })
        .collect()
}
