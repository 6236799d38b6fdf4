//! End-to-end experiment: score, attack, re-synthesize, detect.
//!
//! Per-trial scores are appended to `<out>/cache/scores.jsonl` as trials
//! complete, behind a fingerprint of everything that determines them. A rerun
//! with the same inputs resumes after the last complete trial.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig};
use super::corpus::{synth_corpus, CorpusConfig, CorpusError};
use super::derive_seed;
use super::noise::{add_gaussian_noise, NoiseError};
use super::report::{build_report, write_report, DetectionReport};
use super::trials::{format_trials, parse_trials, Trial, TrialError};
use super::wav::{load_wav, WavError};
use crate::asv::{train_model, AsvError, AsvModel, FeatureConfig, TrainConfig};
use crate::attack::{bim_attack_enrolled, AttackConfig, AttackError};
use crate::detect::MetricError;
use crate::dsp::Waveform;
use crate::resynth::{ResynthError, Resynthesizer};

const CACHE_FORMAT: &str = "resynth-detect-cache";
const MANIFEST_VERSION: u32 = 1;
const TRAIN_CORPUS_STREAM: u64 = 11;
const TRAIN_STREAM: u64 = 12;
const NOISE_STREAM: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Data,
    Model,
    Cache,
    Score,
    Attack,
    Resynth,
    Control,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Model => "model",
            Stage::Cache => "cache",
            Stage::Score => "score",
            Stage::Attack => "attack",
            Stage::Resynth => "resynth",
            Stage::Control => "control",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Trials(#[from] TrialError),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Asv(#[from] AsvError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Resynth(#[from] ResynthError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct ExperimentError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

impl ExperimentError {
    pub fn is_bridge(&self) -> bool {
        matches!(self.source, StageError::Resynth(ResynthError::Bridge(_)))
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, ExperimentError>;
}

impl<T, E: Into<StageError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, ExperimentError> {
        self.map_err(|e| ExperimentError {
            stage,
            source: e.into(),
        })
    }
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Scores of one trial. Method-indexed vectors follow the configured method
/// order; budget-indexed vectors follow [`RunManifest::epsilons`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub is_target: bool,
    pub enroll_id: String,
    pub test_id: String,
    pub genuine: f64,
    pub noisy: f64,
    pub resynth_genuine: Vec<f64>,
    pub resynth_noisy: Vec<f64>,
    pub attacked: Vec<f64>,
    pub linf: Vec<f64>,
    pub iterations: Vec<usize>,
    /// `resynth_attacked[m][e]`.
    pub resynth_attacked: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    /// `trained` or the path of the loaded model.
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_eer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_eer: Option<f64>,
}

/// Everything besides per-trial scores that the report needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub fingerprint: String,
    pub config: ExperimentConfig,
    /// Positive budgets, ascending and deduplicated.
    pub epsilons: Vec<f64>,
    pub methods: Vec<String>,
    pub model: ModelSummary,
    pub n_trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
    pub resumed_trials: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub manifest: RunManifest,
    pub records: Vec<TrialRecord>,
    pub report: DetectionReport,
    pub timings: Timings,
}

struct Data {
    trials: Vec<Trial>,
    audio: HashMap<String, Waveform>,
    sample_rate: u32,
}

fn load_data(cfg: &ExperimentConfig) -> Result<Data, StageError> {
    let (trials, audio) = match &cfg.trials {
        Some(path) => {
            let trials = parse_trials(path)?;
            let root = cfg
                .audio_root
                .clone()
                .or_else(|| path.parent().map(Path::to_path_buf))
                .unwrap_or_default();
            let mut ids: Vec<&String> = trials
                .iter()
                .flat_map(|t| [&t.enroll_id, &t.test_id])
                .collect();
            ids.sort();
            ids.dedup();
            let audio = ids
                .par_iter()
                .map(|id| Ok(((*id).clone(), load_wav(&root.join(id))?)))
                .collect::<Result<HashMap<_, _>, WavError>>()?;
            (trials, audio)
        }
        None => {
            let corpus = synth_corpus(&eval_corpus_config(cfg))?;
            let audio = corpus
                .utterances
                .into_iter()
                .map(|u| (u.id, u.waveform))
                .collect();
            (corpus.trials, audio)
        }
    };
    if trials.is_empty() {
        return Err(TrialError::Empty.into());
    }
    let mut rates: Vec<u32> = audio.values().map(Waveform::sample_rate).collect();
    rates.sort();
    rates.dedup();
    match rates[..] {
        [sr] => Ok(Data {
            trials,
            audio,
            sample_rate: sr,
        }),
        _ => Err(StageError::Invalid(format!(
            "audio mixes sample rates {rates:?}"
        ))),
    }
}

pub fn eval_corpus_config(cfg: &ExperimentConfig) -> CorpusConfig {
    CorpusConfig {
        seed: cfg.seed,
        n_speakers: cfg.corpus_speakers,
        utts_per_speaker: cfg.corpus_utts,
        duration_s: cfg.corpus_duration_s,
        sample_rate: 16_000,
        n_trials: cfg.corpus_trials,
    }
}

/// Training corpus: an independent speaker draw from a derived seed.
pub fn train_corpus_config(cfg: &ExperimentConfig) -> CorpusConfig {
    CorpusConfig {
        seed: derive_seed(cfg.seed, TRAIN_CORPUS_STREAM, 0),
        n_speakers: cfg.train_speakers,
        utts_per_speaker: cfg.train_utts,
        duration_s: cfg.corpus_duration_s,
        sample_rate: 16_000,
        n_trials: 0,
    }
}

pub fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        steps: cfg.train_steps,
        seed: derive_seed(cfg.seed, TRAIN_STREAM, 0),
        ..TrainConfig::default()
    }
}

fn obtain_model(cfg: &ExperimentConfig) -> Result<(AsvModel, ModelSummary), StageError> {
    if let Some(path) = &cfg.model {
        return Ok((
            AsvModel::load(path)?,
            ModelSummary {
                source: path.display().to_string(),
                initial_eer: None,
                validation_eer: None,
            },
        ));
    }
    let corpus = synth_corpus(&train_corpus_config(cfg))?;
    let outcome = train_model(
        &corpus.labeled(),
        FeatureConfig::default(),
        &train_config(cfg),
    )?;
    Ok((
        outcome.model,
        ModelSummary {
            source: "trained".into(),
            initial_eer: Some(outcome.initial_eer),
            validation_eer: Some(outcome.validation_eer),
        },
    ))
}

/// Positive budgets, ascending, without duplicates.
pub fn attack_budgets(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut eps: Vec<f64> = cfg.epsilons.iter().copied().filter(|e| *e > 0.0).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    eps
}

fn fingerprint(cfg: &ExperimentConfig, model: &AsvModel, data: &Data) -> String {
    let mut h = Sha256::new();
    let scored = ExperimentConfig {
        out_dir: PathBuf::new(),
        fpr_given: Vec::new(),
        hist_bins: 0,
        ..cfg.clone()
    };
    h.update(scored.to_toml());
    h.update(model.to_json().expect("model serializes"));
    h.update(format_trials(&data.trials));
    let mut ids: Vec<&String> = data.audio.keys().collect();
    ids.sort();
    for id in ids {
        h.update(id.as_bytes());
        for s in data.audio[id].samples() {
            h.update(s.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    fingerprint: String,
}

/// Valid prefix of the cache; any mismatch or damage discards the remainder.
fn read_cache(
    path: &Path,
    fingerprint: &str,
    trials: &[Trial],
    widths: (usize, usize),
) -> Vec<TrialRecord> {
    let Ok(file) = File::open(path) else {
        return Vec::new();
    };
    let mut lines = BufReader::new(file).lines();
    let header_ok = lines
        .next()
        .and_then(Result::ok)
        .and_then(|l| serde_json::from_str::<CacheHeader>(&l).ok())
        .is_some_and(|h| h.format == CACHE_FORMAT && h.fingerprint == fingerprint);
    if !header_ok {
        return Vec::new();
    }
    let (n_methods, n_eps) = widths;
    let mut records = Vec::new();
    for line in lines {
        let Some(rec) = line
            .ok()
            .and_then(|l| serde_json::from_str::<TrialRecord>(&l).ok())
        else {
            break;
        };
        let Some(trial) = trials.get(records.len()) else {
            break;
        };
        let consistent = rec.index == records.len()
            && rec.is_target == trial.is_target
            && rec.enroll_id == trial.enroll_id
            && rec.test_id == trial.test_id
            && rec.resynth_genuine.len() == n_methods
            && rec.resynth_noisy.len() == n_methods
            && rec.attacked.len() == n_eps
            && rec.resynth_attacked.len() == n_methods
            && rec.resynth_attacked.iter().all(|r| r.len() == n_eps);
        if !consistent {
            break;
        }
        records.push(rec);
    }
    records
}

fn write_json_line<T: Serialize>(out: &mut impl Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

fn rewrite_cache(
    path: &Path,
    fingerprint: &str,
    records: &[TrialRecord],
) -> Result<File, StageError> {
    let mut file = File::create(path).map_err(io_error(path))?;
    let header = CacheHeader {
        format: CACHE_FORMAT.into(),
        fingerprint: fingerprint.into(),
    };
    write_json_line(&mut file, &header).map_err(io_error(path))?;
    for r in records {
        write_json_line(&mut file, r).map_err(io_error(path))?;
    }
    file.flush().map_err(io_error(path))?;
    drop(file);
    OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(io_error(path))
}

pub fn cache_path(out_dir: &Path) -> PathBuf {
    out_dir.join("cache").join("scores.jsonl")
}

pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("cache").join("manifest.json")
}

/// Re-synthesized genuine and noise-perturbed versions of each distinct test utterance.
struct TestVariants {
    noisy: HashMap<String, Waveform>,
    /// `[method] -> id -> waveform`.
    resynth: Vec<HashMap<String, Waveform>>,
    resynth_noisy: Vec<HashMap<String, Waveform>>,
}

fn prepare_test_variants(
    cfg: &ExperimentConfig,
    data: &Data,
    resynths: &[Resynthesizer],
    pending: &[Trial],
) -> Result<TestVariants, ExperimentError> {
    let mut ids: Vec<&String> = pending.iter().map(|t| &t.test_id).collect();
    ids.sort();
    ids.dedup();
    // noise seeds come from the position in the full sorted test list, so a
    // resumed run draws the same noise
    let mut all_ids: Vec<&String> = data.trials.iter().map(|t| &t.test_id).collect();
    all_ids.sort();
    all_ids.dedup();
    let noisy: Vec<Waveform> = ids
        .par_iter()
        .map(|id| {
            let pos = all_ids
                .binary_search(id)
                .expect("pending ids are trial ids");
            let seed = derive_seed(cfg.seed, NOISE_STREAM, pos as u64);
            add_gaussian_noise(&data.audio[*id], cfg.control_snr_db, seed)
        })
        .collect::<Result<_, _>>()
        .at(Stage::Control)?;
    let clean: Vec<Waveform> = ids.iter().map(|id| data.audio[*id].clone()).collect();
    let keyed = |ws: Vec<Waveform>| {
        ids.iter()
            .map(|id| (*id).clone())
            .zip(ws)
            .collect::<HashMap<_, _>>()
    };
    let mut resynth = Vec::new();
    let mut resynth_noisy = Vec::new();
    for r in resynths {
        resynth.push(keyed(r.apply_batch(&clean).at(Stage::Resynth)?));
        resynth_noisy.push(keyed(r.apply_batch(&noisy).at(Stage::Control)?));
    }
    Ok(TestVariants {
        noisy: keyed(noisy),
        resynth,
        resynth_noisy,
    })
}

fn chunk_len() -> usize {
    (2 * rayon::current_num_threads()).max(8)
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a Data,
    model: &'a AsvModel,
    resynths: &'a [Resynthesizer],
    epsilons: &'a [f64],
}

impl Runner<'_> {
    fn score_chunk(
        &self,
        first: usize,
        trials: &[Trial],
        variants: &TestVariants,
    ) -> Result<Vec<TrialRecord>, ExperimentError> {
        let scorer = self.model.scorer().at(Stage::Score)?;
        let enrolled = trials
            .par_iter()
            .map(|t| scorer.enroll(&self.data.audio[&t.enroll_id]))
            .collect::<Result<Vec<_>, _>>()
            .at(Stage::Score)?;

        struct Partial {
            genuine: f64,
            noisy: f64,
            resynth_genuine: Vec<f64>,
            resynth_noisy: Vec<f64>,
            adversarial: Vec<Waveform>,
            attacked: Vec<f64>,
            linf: Vec<f64>,
            iterations: Vec<usize>,
        }
        let partial = trials
            .par_iter()
            .zip(&enrolled)
            .map(|(t, e)| -> Result<Partial, ExperimentError> {
                let x = &self.data.audio[&t.test_id];
                let mut p = Partial {
                    genuine: e.score(x).at(Stage::Score)?,
                    noisy: e.score(&variants.noisy[&t.test_id]).at(Stage::Control)?,
                    resynth_genuine: Vec::new(),
                    resynth_noisy: Vec::new(),
                    adversarial: Vec::new(),
                    attacked: Vec::new(),
                    linf: Vec::new(),
                    iterations: Vec::new(),
                };
                for m in 0..self.resynths.len() {
                    p.resynth_genuine
                        .push(e.score(&variants.resynth[m][&t.test_id]).at(Stage::Score)?);
                    p.resynth_noisy.push(
                        e.score(&variants.resynth_noisy[m][&t.test_id])
                            .at(Stage::Control)?,
                    );
                }
                for &eps in self.epsilons {
                    let mut ac =
                        AttackConfig::new(eps, self.cfg.alpha, t.is_target).at(Stage::Attack)?;
                    ac.quantize = self.cfg.quantize;
                    let out = bim_attack_enrolled(e, x, &ac).at(Stage::Attack)?;
                    p.attacked
                        .push(e.score(&out.adversarial).at(Stage::Attack)?);
                    p.linf.push(out.adversarial.max_abs_diff(x));
                    p.iterations.push(out.iterations);
                    p.adversarial.push(out.adversarial);
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>, _>>()?;

        // one batch per method, so an external vocoder runs once per chunk
        let batch: Vec<Waveform> = partial
            .iter()
            .flat_map(|p| p.adversarial.iter().cloned())
            .collect();
        let n_eps = self.epsilons.len();
        let mut resynth_attacked = vec![Vec::with_capacity(self.resynths.len()); trials.len()];
        for r in self.resynths {
            let ys = if batch.is_empty() {
                Vec::new()
            } else {
                r.apply_batch(&batch).at(Stage::Resynth)?
            };
            let scores = ys
                .par_iter()
                .enumerate()
                .map(|(k, y)| enrolled[k / n_eps].score(y))
                .collect::<Result<Vec<_>, _>>()
                .at(Stage::Resynth)?;
            for (i, row) in resynth_attacked.iter_mut().enumerate() {
                row.push(scores[i * n_eps..(i + 1) * n_eps].to_vec());
            }
        }
        Ok(trials
            .iter()
            .zip(partial)
            .zip(resynth_attacked)
            .enumerate()
            .map(|(k, ((t, p), ra))| TrialRecord {
                index: first + k,
                is_target: t.is_target,
                enroll_id: t.enroll_id.clone(),
                test_id: t.test_id.clone(),
                genuine: p.genuine,
                noisy: p.noisy,
                resynth_genuine: p.resynth_genuine,
                resynth_noisy: p.resynth_noisy,
                attacked: p.attacked,
                linf: p.linf,
                iterations: p.iterations,
                resynth_attacked: ra,
            })
            .collect())
    }
}

/// Runs every stage and writes the report files into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let mut stages = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, stages: &mut Vec<(String, f64)>| {
        stages.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    cfg.validate().at(Stage::Config)?;
    let methods = cfg.resynth_methods().at(Stage::Config)?;
    let epsilons = attack_budgets(cfg);

    let data = load_data(cfg).at(Stage::Data)?;
    let resynths = methods
        .iter()
        .map(|m| Resynthesizer::new(m.clone(), data.sample_rate))
        .collect::<Result<Vec<_>, _>>()
        .at(Stage::Config)?;
    lap("data", &mut stages);

    let (model, model_summary) = obtain_model(cfg).at(Stage::Model)?;
    if model.features.sample_rate != data.sample_rate {
        return Err(StageError::Invalid(format!(
            "model expects {} Hz audio, trials are {} Hz",
            model.features.sample_rate, data.sample_rate
        )))
        .at(Stage::Model);
    }
    lap("model", &mut stages);

    let out_dir = &cfg.out_dir;
    let cache_dir = out_dir.join("cache");
    fs::create_dir_all(&cache_dir)
        .map_err(io_error(&cache_dir))
        .at(Stage::Cache)?;
    if model_summary.source == "trained" {
        model.save(&out_dir.join("model.json")).at(Stage::Model)?;
    }
    let fp = fingerprint(cfg, &model, &data);
    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        fingerprint: fp.clone(),
        config: cfg.clone(),
        epsilons: epsilons.clone(),
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        model: model_summary,
        n_trials: data.trials.len(),
    };
    let cache = cache_path(out_dir);
    let mut records = read_cache(&cache, &fp, &data.trials, (methods.len(), epsilons.len()));
    let resumed = records.len();
    let mut cache_file = rewrite_cache(&cache, &fp, &records).at(Stage::Cache)?;
    let mpath = manifest_path(out_dir);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&mpath, text)
        .map_err(io_error(&mpath))
        .at(Stage::Cache)?;
    lap("cache", &mut stages);

    let pending = &data.trials[resumed..];
    if !pending.is_empty() {
        let variants = prepare_test_variants(cfg, &data, &resynths, pending)?;
        lap("genuine-resynth", &mut stages);
        let runner = Runner {
            cfg,
            data: &data,
            model: &model,
            resynths: &resynths,
            epsilons: &epsilons,
        };
        let step = chunk_len();
        for (c, chunk) in pending.chunks(step).enumerate() {
            let fresh = runner.score_chunk(resumed + c * step, chunk, &variants)?;
            for r in &fresh {
                write_json_line(&mut cache_file, r)
                    .map_err(io_error(&cache))
                    .at(Stage::Cache)?;
            }
            cache_file
                .flush()
                .map_err(io_error(&cache))
                .at(Stage::Cache)?;
            records.extend(fresh);
        }
        lap("trials", &mut stages);
    }

    let report = build_report(&manifest, &records).at(Stage::Report)?;
    write_report(out_dir, &report, &manifest, &records).at(Stage::Report)?;
    lap("report", &mut stages);
    let timings = Timings {
        stages,
        resumed_trials: resumed,
    };
    let tpath = out_dir.join("timings.json");
    let text = serde_json::to_string_pretty(&timings).expect("timings serialize") + "\n";
    fs::write(&tpath, text)
        .map_err(io_error(&tpath))
        .at(Stage::Report)?;
    Ok(ExperimentOutput {
        manifest,
        records,
        report,
        timings,
    })
}

/// Rebuilds the report files from a finished run's cache.
pub fn render_report(out_dir: &Path) -> Result<DetectionReport, ExperimentError> {
    let mpath = manifest_path(out_dir);
    let text = fs::read_to_string(&mpath)
        .map_err(io_error(&mpath))
        .at(Stage::Cache)?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| StageError::Invalid(format!("{}: {e}", mpath.display())))
        .at(Stage::Cache)?;
    let cache = cache_path(out_dir);
    let file = File::open(&cache)
        .map_err(io_error(&cache))
        .at(Stage::Cache)?;
    let mut lines = BufReader::new(file).lines();
    let header: CacheHeader = lines
        .next()
        .and_then(Result::ok)
        .and_then(|l| serde_json::from_str(&l).ok())
        .ok_or_else(|| StageError::Invalid(format!("{}: missing cache header", cache.display())))
        .at(Stage::Cache)?;
    if header.fingerprint != manifest.fingerprint {
        return Err(StageError::Invalid(
            "cache and manifest fingerprints differ".into(),
        ))
        .at(Stage::Cache);
    }
    let records = lines
        .map(|l| {
            let l = l.map_err(io_error(&cache))?;
            serde_json::from_str::<TrialRecord>(&l)
                .map_err(|e| StageError::Invalid(format!("{}: {e}", cache.display())))
        })
        .collect::<Result<Vec<_>, _>>()
        .at(Stage::Cache)?;
    if records.len() != manifest.n_trials {
        return Err(StageError::Invalid(format!(
            "cache holds {} of {} trials; rerun the experiment to finish it",
            records.len(),
            manifest.n_trials
        )))
        .at(Stage::Cache);
    }
    let report = build_report(&manifest, &records).at(Stage::Report)?;
    write_report(out_dir, &report, &manifest, &records).at(Stage::Report)?;
    Ok(report)
}
