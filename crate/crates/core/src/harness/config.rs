//! Experiment configuration file.
//!
//! A flat TOML document; every key is optional except `version`:
//!
//! ```toml
//! version = 1
//! seed = 7
//! epsilons = [5, 10, 15, 20]
//! methods = ["gl-mel", "gl-lin", "gaussian"]
//! ```
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `seed` | 0 | master seed |
//! | `out_dir` | `out` | report directory |
//! | `trials` | none | trial list; a synthetic corpus is generated when absent |
//! | `audio_root` | directory of `trials` | root for trial ids |
//! | `model` | none | model JSON; a model is trained when absent |
//! | `corpus_speakers`, `corpus_utts`, `corpus_duration_s`, `corpus_trials` | 8, 10, 0.5, 400 | synthetic evaluation corpus |
//! | `train_speakers`, `train_utts`, `train_steps` | 40, 8, 600 | synthetic training corpus and steps |
//! | `methods` | `["gl-mel", "gl-lin", "gaussian"]` | re-synthesis methods |
//! | `gl_iterations` | 100 | Griffin-Lim iterations |
//! | `gaussian_sigma` | 2.0 | Gaussian filter width in samples |
//! | `vocoder_program`, `vocoder_args`, `vocoder_timeout_secs` | none, [], 600 | external vocoder for method `vocoder` |
//! | `epsilons` | `[5, 10, 15, 20]` | attack budgets, PCM16 units |
//! | `alpha` | 1 | attack step, PCM16 units |
//! | `quantize` | false | snap adversarial samples to the PCM16 grid |
//! | `fpr_given` | `[0.05, 0.01, 0.005, 0.001]` | false-positive budgets |
//! | `control_snr_db` | 30 | SNR of the benign-noise control |
//! | `hist_bins` | 40 | bins per score-variation histogram |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resynth::{default_gl_stft, ResynthMethod, VocoderCommand, DEFAULT_TIMEOUT_SECS};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config version {0} is not supported (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audio_root: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub corpus_speakers: usize,
    pub corpus_utts: usize,
    pub corpus_duration_s: f64,
    pub corpus_trials: usize,
    pub train_speakers: usize,
    pub train_utts: usize,
    pub train_steps: usize,
    pub methods: Vec<String>,
    pub gl_iterations: usize,
    pub gaussian_sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocoder_program: Option<PathBuf>,
    pub vocoder_args: Vec<String>,
    pub vocoder_timeout_secs: u64,
    pub epsilons: Vec<f64>,
    pub alpha: f64,
    pub quantize: bool,
    pub fpr_given: Vec<f64>,
    pub control_snr_db: f64,
    pub hist_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            out_dir: PathBuf::from("out"),
            trials: None,
            audio_root: None,
            model: None,
            corpus_speakers: 8,
            corpus_utts: 10,
            corpus_duration_s: 0.5,
            corpus_trials: 400,
            train_speakers: 40,
            train_utts: 8,
            train_steps: 600,
            methods: vec!["gl-mel".into(), "gl-lin".into(), "gaussian".into()],
            gl_iterations: 100,
            gaussian_sigma: 2.0,
            vocoder_program: None,
            vocoder_args: Vec::new(),
            vocoder_timeout_secs: DEFAULT_TIMEOUT_SECS,
            epsilons: vec![5.0, 10.0, 15.0, 20.0],
            alpha: 1.0,
            quantize: false,
            fpr_given: vec![0.05, 0.01, 0.005, 0.001],
            control_snr_db: 30.0,
            hist_bins: 40,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text)?;
        if !table.contains_key("version") {
            return Err(ConfigError::Invalid("missing `version` key".into()));
        }
        let cfg: Self = table.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        if self.epsilons.is_empty() {
            return bad("epsilons is empty".into());
        }
        if let Some(e) = self
            .epsilons
            .iter()
            .find(|e| !(**e >= 0.0 && e.is_finite()))
        {
            return bad(format!("epsilon {e} must be finite and non-negative"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha {} must be positive", self.alpha));
        }
        if let Some(f) = self.fpr_given.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return bad(format!("fpr_given {f} is outside [0, 1]"));
        }
        if self.methods.is_empty() {
            return bad("methods is empty".into());
        }
        if self.gl_iterations == 0 {
            return bad("gl_iterations must be positive".into());
        }
        if self.hist_bins == 0 {
            return bad("hist_bins must be positive".into());
        }
        if self.control_snr_db.is_nan() || self.control_snr_db == f64::NEG_INFINITY {
            return bad(format!(
                "control_snr_db {} is not usable",
                self.control_snr_db
            ));
        }
        self.resynth_methods().map(|_| ())
    }

    /// Methods in configured order.
    pub fn resynth_methods(&self) -> Result<Vec<ResynthMethod>, ConfigError> {
        let mut seen = Vec::new();
        self.methods
            .iter()
            .map(|name| {
                if seen.contains(name) {
                    return Err(ConfigError::Invalid(format!("method {name:?} listed twice")));
                }
                seen.push(name.clone());
                let method = match name.as_str() {
                    "identity" => ResynthMethod::Identity,
                    "gl-lin" => ResynthMethod::GriffinLimLinear {
                        stft: default_gl_stft(),
                        n_iter: self.gl_iterations,
                    },
                    "gl-mel" => ResynthMethod::GriffinLimMel {
                        stft: default_gl_stft(),
                        n_mels: 64,
                        fmin: 0.0,
                        fmax: 8000.0,
                        n_iter: self.gl_iterations,
                    },
                    "gaussian" => ResynthMethod::gaussian(self.gaussian_sigma),
                    "vocoder" => {
                        let program = self.vocoder_program.clone().ok_or_else(|| {
                            ConfigError::Invalid("method vocoder needs vocoder_program".into())
                        })?;
                        ResynthMethod::vocoder(
                            VocoderCommand::new(program)
                                .with_args(self.vocoder_args.clone())
                                .with_timeout(self.vocoder_timeout_secs),
                        )
                    }
                    other => {
                        return Err(ConfigError::Invalid(format!(
                            "unknown method {other:?} (expected identity, gl-lin, gl-mel, gaussian or vocoder)"
                        )))
                    }
                };
                Ok(method)
            })
            .collect()
    }
}
