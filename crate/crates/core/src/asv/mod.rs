//! A compact differentiable speaker-verification scorer.
//!
//! `s = cos(embed(x_t), embed(x_e))` where
//! `embed(x) = normalize(W2 tanh(W1 meanpool(logmel(x)) + b1))`.
//! The gradient of `s` with respect to the test waveform is computed
//! analytically in [`EnrolledScorer::score_and_gradient`]; the enrollment
//! side is held constant.

mod features;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{extract_features, mean_pool, FeatureConfig, FeatureExtractor};
pub use train::{train_model, LabeledUtterance, TrainConfig, TrainOutcome};

use crate::dsp::{DspError, FrameMatrix, Waveform};

pub const MODEL_FORMAT: &str = "resynth-detect-asv";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AsvError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("waveform of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("sample rate {got} does not match the model's {expected}")]
    SampleRate { expected: u32, got: u32 },
    #[error("embedding pre-activation is zero; cannot normalize")]
    ZeroEmbedding,
    #[error("feature matrix has {got} columns, model expects {expected}")]
    FeatureShape { expected: usize, got: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("degenerate training corpus: {0}")]
    DegenerateCorpus(String),
    #[error("model file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model file {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

/// Unit-norm speaker embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot.clamp(-1.0, 1.0)
    }
}

/// Per-sample partial derivatives of the score with respect to the test waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient(pub Vec<f64>);

/// Parameters of the scorer. Weight matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsvModel {
    pub features: FeatureConfig,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    /// `hidden_dim x n_mels`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `embedding_dim x hidden_dim`.
    pub w2: Vec<f64>,
}

/// Activations of the embedding network for one pooled feature vector.
#[derive(Debug, Clone)]
pub(crate) struct EmbedForward {
    pub hidden: Vec<f64>,
    pub norm: f64,
    pub embedding: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: AsvModel,
}

impl AsvModel {
    pub fn n_mels(&self) -> usize {
        self.features.n_mels
    }

    pub fn validate(&self) -> Result<(), AsvError> {
        self.features.validate()?;
        let (n, h, d) = (self.n_mels(), self.hidden_dim, self.embedding_dim);
        if d < 2 {
            return Err(AsvError::InvalidModel(format!("embedding_dim {d} < 2")));
        }
        if h == 0 {
            return Err(AsvError::InvalidModel("hidden_dim must be positive".into()));
        }
        for (name, got, want) in [
            ("w1", self.w1.len(), h * n),
            ("b1", self.b1.len(), h),
            ("w2", self.w2.len(), d * h),
        ] {
            if got != want {
                return Err(AsvError::InvalidModel(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        if self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .any(|v| !v.is_finite())
        {
            return Err(AsvError::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    pub(crate) fn forward_pooled(&self, pooled: &[f64]) -> Result<EmbedForward, AsvError> {
        let n = self.n_mels();
        if pooled.len() != n {
            return Err(AsvError::FeatureShape {
                expected: n,
                got: pooled.len(),
            });
        }
        let hidden: Vec<f64> = self
            .w1
            .chunks_exact(n)
            .zip(&self.b1)
            .map(|(row, b)| (dot(row, pooled) + b).tanh())
            .collect();
        let z: Vec<f64> = self
            .w2
            .chunks_exact(self.hidden_dim)
            .map(|row| dot(row, &hidden))
            .collect();
        let norm = dot(&z, &z).sqrt();
        if !(norm > 0.0) {
            return Err(AsvError::ZeroEmbedding);
        }
        Ok(EmbedForward {
            hidden,
            norm,
            embedding: z.iter().map(|v| v / norm).collect(),
        })
    }

    /// Gradient with respect to the pooled features, given `d loss / d embedding`.
    pub(crate) fn backward_pooled(&self, fwd: &EmbedForward, grad_embedding: &[f64]) -> Vec<f64> {
        let grad_z = normalize_backward(&fwd.embedding, fwd.norm, grad_embedding);
        let h = self.hidden_dim;
        let mut grad_pre = vec![0.0; h];
        for (row, gz) in self.w2.chunks_exact(h).zip(&grad_z) {
            for (g, w) in grad_pre.iter_mut().zip(row) {
                *g += gz * w;
            }
        }
        for (g, a) in grad_pre.iter_mut().zip(&fwd.hidden) {
            *g *= 1.0 - a * a;
        }
        let n = self.n_mels();
        let mut grad = vec![0.0; n];
        for (row, g) in self.w1.chunks_exact(n).zip(&grad_pre) {
            for (o, w) in grad.iter_mut().zip(row) {
                *o += g * w;
            }
        }
        grad
    }

    pub fn embed_pooled(&self, pooled: &[f64]) -> Result<Embedding, AsvError> {
        Ok(Embedding(self.forward_pooled(pooled)?.embedding))
    }

    pub fn scorer(&self) -> Result<Scorer, AsvError> {
        Scorer::new(self.clone())
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, AsvError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|source| AsvError::Json {
            path: "<string>".into(),
            source,
        })?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(AsvError::InvalidModel(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), AsvError> {
        let text = self.to_json().map_err(|source| AsvError::Json {
            path: path.display().to_string(),
            source,
        })?;
        fs::write(path, text).map_err(|source| AsvError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, AsvError> {
        let text = fs::read_to_string(path).map_err(|source| AsvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            AsvError::Json { source, .. } => AsvError::Json {
                path: path.display().to_string(),
                source,
            },
            other => other,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Backward pass of `e = z / ||z||`.
fn normalize_backward(e: &[f64], norm: f64, grad_e: &[f64]) -> Vec<f64> {
    let proj = dot(e, grad_e);
    e.iter()
        .zip(grad_e)
        .map(|(ei, gi)| (gi - proj * ei) / norm)
        .collect()
}

/// Model plus its precomputed feature front end.
#[derive(Debug, Clone)]
pub struct Scorer {
    model: AsvModel,
    extractor: FeatureExtractor,
}

impl Scorer {
    pub fn new(model: AsvModel) -> Result<Self, AsvError> {
        model.validate()?;
        Ok(Self {
            extractor: FeatureExtractor::new(model.features)?,
            model,
        })
    }

    pub fn model(&self) -> &AsvModel {
        &self.model
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn embed(&self, x: &Waveform) -> Result<Embedding, AsvError> {
        self.model.embed_pooled(&self.extractor.pooled(x)?)
    }

    pub fn score(&self, test: &Waveform, enroll: &Waveform) -> Result<f64, AsvError> {
        Ok(self.embed(test)?.cosine(&self.embed(enroll)?))
    }

    pub fn enroll(&self, enroll: &Waveform) -> Result<EnrolledScorer<'_>, AsvError> {
        Ok(EnrolledScorer {
            scorer: self,
            enrollment: self.embed(enroll)?,
        })
    }
}

/// Scorer bound to a fixed enrollment embedding.
#[derive(Debug, Clone)]
pub struct EnrolledScorer<'a> {
    scorer: &'a Scorer,
    enrollment: Embedding,
}

impl EnrolledScorer<'_> {
    pub fn enrollment(&self) -> &Embedding {
        &self.enrollment
    }

    pub fn score(&self, test: &Waveform) -> Result<f64, AsvError> {
        Ok(self.scorer.embed(test)?.cosine(&self.enrollment))
    }

    /// Score and its gradient with respect to every sample of `test`.
    pub fn score_and_gradient(&self, test: &Waveform) -> Result<(f64, ScoreGradient), AsvError> {
        let extractor = &self.scorer.extractor;
        let model = &self.scorer.model;
        let pooled = extractor.pooled(test)?;
        let fwd = model.forward_pooled(&pooled)?;
        let score = dot(&fwd.embedding, self.enrollment.as_slice());
        let grad_pooled = model.backward_pooled(&fwd, self.enrollment.as_slice());
        let grad = extractor.pooled_backward(test, &grad_pooled)?;
        Ok((score.clamp(-1.0, 1.0), ScoreGradient(grad)))
    }
}

/// Embedding of a feature matrix (`n_frames x n_mels`).
pub fn embed(features: &FrameMatrix<f64>, model: &AsvModel) -> Result<Embedding, AsvError> {
    if features.cols() != model.n_mels() {
        return Err(AsvError::FeatureShape {
            expected: model.n_mels(),
            got: features.cols(),
        });
    }
    model.embed_pooled(&mean_pool(features))
}

/// Cosine score between test and enrollment embeddings.
pub fn score(test: &Waveform, enroll: &Waveform, model: &AsvModel) -> Result<f64, AsvError> {
    model.scorer()?.score(test, enroll)
}

/// `d score / d test`, enrollment held constant.
pub fn score_gradient(
    test: &Waveform,
    enroll: &Waveform,
    model: &AsvModel,
) -> Result<ScoreGradient, AsvError> {
    let scorer = model.scorer()?;
    let enrolled = scorer.enroll(enroll)?;
    Ok(enrolled.score_and_gradient(test)?.1)
}
