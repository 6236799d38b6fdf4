//! Synthetic multi-speaker corpus.
//!
//! Each speaker is a fixed draw of fundamental frequency, harmonic amplitude
//! profile and two resonances. Utterances add per-utterance pitch and
//! resonance offsets, vibrato, a slow pitch drift, syllable-rate amplitude
//! modulation and resonance-filtered breath noise, then peak-normalize to 0.5.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::derive_seed;
use super::trials::{write_trials, Trial, TrialError};
use super::wav::{save_wav, WavError};
use crate::asv::LabeledUtterance;
use crate::dsp::{DspError, Waveform};

const F0_RANGE: (f64, f64) = (90.0, 260.0);
const PEAK: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Trials(#[from] TrialError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Total trials in the generated list, split evenly between target and non-target.
    pub n_trials: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_speakers: 8,
            utts_per_speaker: 10,
            duration_s: 2.0,
            sample_rate: 16_000,
            n_trials: 400,
        }
    }
}

impl CorpusConfig {
    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::Invalid(m));
        if self.n_speakers < 2 {
            return bad(format!("need at least 2 speakers, got {}", self.n_speakers));
        }
        if self.utts_per_speaker < 2 {
            return bad(format!(
                "need at least 2 utterances per speaker, got {}",
                self.utts_per_speaker
            ));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} s must be positive", self.duration_s));
        }
        if self.sample_rate < 8000 {
            return bad(format!(
                "sample rate {} Hz is below 8 kHz",
                self.sample_rate
            ));
        }
        if self.len() == 0 {
            return bad("duration rounds to zero samples".into());
        }
        let target_pairs =
            self.n_speakers * self.utts_per_speaker * (self.utts_per_speaker - 1) / 2;
        if self.n_trials / 2 > target_pairs {
            return bad(format!(
                "{} target trials requested but only {target_pairs} distinct same-speaker pairs exist",
                self.n_trials / 2
            ));
        }
        Ok(())
    }

    fn len(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }
}

/// Two-pole resonance: center frequency and bandwidth in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub freq: f64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub f0: f64,
    /// Relative amplitude of harmonic `k + 1`.
    pub harmonics: Vec<f64>,
    pub resonances: [Resonance; 2],
    /// Breath-noise level relative to the voiced source RMS.
    pub noise_level: f64,
}

#[derive(Debug, Clone)]
pub struct Utterance {
    /// Relative path, e.g. `spk03/utt07.wav`.
    pub id: String,
    pub speaker: usize,
    pub waveform: Waveform,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub speakers: Vec<SpeakerProfile>,
    pub utterances: Vec<Utterance>,
    pub trials: Vec<Trial>,
}

impl Corpus {
    pub fn labeled(&self) -> Vec<LabeledUtterance> {
        self.utterances
            .iter()
            .map(|u| LabeledUtterance {
                speaker: u.speaker,
                waveform: u.waveform.clone(),
            })
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    /// Writes `<dir>/<id>` for every utterance, `trials.txt` and `speakers.json`.
    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CorpusError::Io { path, source }
        };
        for spk in 0..self.speakers.len() {
            let d = dir.join(speaker_dir(spk));
            std::fs::create_dir_all(&d).map_err(io(&d))?;
        }
        for u in &self.utterances {
            save_wav(&dir.join(&u.id), &u.waveform)?;
        }
        write_trials(&dir.join("trials.txt"), &self.trials)?;
        let manifest = serde_json::json!({
            "config": self.config,
            "speakers": self.speakers,
        });
        let path = dir.join("speakers.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(io(&path))
    }
}

fn speaker_dir(spk: usize) -> String {
    format!("spk{spk:02}")
}

pub fn utterance_id(spk: usize, utt: usize) -> String {
    format!("{}/utt{utt:02}.wav", speaker_dir(spk))
}

fn stream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, a, b))
}

fn draw_speakers(cfg: &CorpusConfig) -> Vec<SpeakerProfile> {
    let mut rng = stream(cfg.seed, 1, 0);
    let n = cfg.n_speakers;
    let spacing = (F0_RANGE.1 - F0_RANGE.0) / n as f64;
    // one grid slot per speaker, jittered by at most a quarter slot
    let mut f0s: Vec<f64> = (0..n)
        .map(|k| F0_RANGE.0 + (k as f64 + 0.5) * spacing + rng.random_range(-0.25..0.25) * spacing)
        .collect();
    f0s.shuffle(&mut rng);
    f0s.into_iter()
        .map(|f0| {
            let tilt = rng.random_range(0.6..1.4);
            let harmonics = (1..=60)
                .map(|k| (k as f64).powf(-tilt) * rng.random_range(0.6..1.4))
                .collect();
            SpeakerProfile {
                f0,
                harmonics,
                resonances: [
                    Resonance {
                        freq: rng.random_range(350.0..950.0),
                        bandwidth: rng.random_range(80.0..220.0),
                    },
                    Resonance {
                        freq: rng.random_range(1100.0..2900.0),
                        bandwidth: rng.random_range(120.0..320.0),
                    },
                ],
                noise_level: rng.random_range(0.05..0.2),
            }
        })
        .collect()
}

/// Unit-peak-gain two-pole resonator applied in place.
fn resonate(x: &mut [f64], res: Resonance, sr: f64) {
    let r = (-PI * res.bandwidth / sr).exp();
    let theta = 2.0 * PI * res.freq / sr;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let gain = (1.0 - r) * (1.0 + r * r - 2.0 * r * (2.0 * theta).cos()).sqrt();
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = gain * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn synth_utterance(
    profile: &SpeakerProfile,
    cfg: &CorpusConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Waveform, CorpusError> {
    let sr = cfg.sample_rate as f64;
    let len = cfg.len();
    let f0 = profile.f0 * (1.0 + rng.random_range(-0.04..0.04));
    let vib_rate = rng.random_range(4.0..7.0);
    let vib_depth = rng.random_range(0.005..0.02);
    let drift_rate = rng.random_range(0.3..1.2);
    let drift_depth = rng.random_range(0.01..0.04);
    let syllable_rate = rng.random_range(2.5..5.5);
    let phases: [f64; 3] = [
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
    ];
    let nyquist_guard = 0.45 * sr;

    let mut phase = 0.0;
    let mut source = vec![0.0; len];
    for (n, s) in source.iter_mut().enumerate() {
        let t = n as f64 / sr;
        let f = f0
            * (1.0
                + vib_depth * (2.0 * PI * vib_rate * t + phases[0]).sin()
                + drift_depth * (2.0 * PI * drift_rate * t + phases[1]).sin());
        phase += 2.0 * PI * f / sr;
        let mut v = 0.0;
        for (k, a) in profile.harmonics.iter().enumerate() {
            let h = (k + 1) as f64;
            if h * f >= nyquist_guard {
                break;
            }
            v += a * (h * phase).sin();
        }
        let envelope = 0.35 + 0.65 * (PI * syllable_rate * t + phases[2]).sin().powi(2);
        *s = envelope * v;
    }
    let rms = (source.iter().map(|v| v * v).sum::<f64>() / len as f64)
        .sqrt()
        .max(1e-12);
    for s in &mut source {
        let noise: f64 = StandardNormal.sample(rng);
        *s += profile.noise_level * rms * noise;
    }
    for res in profile.resonances {
        let shifted = Resonance {
            freq: res.freq * (1.0 + rng.random_range(-0.03..0.03)),
            bandwidth: res.bandwidth,
        };
        resonate(&mut source, shifted, sr);
    }
    let peak = source.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for s in &mut source {
            *s *= PEAK / peak;
        }
    }
    Ok(Waveform::new(source, cfg.sample_rate)?)
}

fn draw_trials(cfg: &CorpusConfig) -> Result<Vec<Trial>, CorpusError> {
    let mut rng = stream(cfg.seed, 3, 0);
    let (n_spk, n_utt) = (cfg.n_speakers, cfg.utts_per_speaker);
    let n_target = cfg.n_trials / 2;
    let n_nontarget = cfg.n_trials - n_target;
    let mut seen = HashSet::new();
    let mut targets = Vec::with_capacity(n_target);
    let mut k = 0;
    while targets.len() < n_target {
        let spk = k % n_spk;
        k += 1;
        // unordered pairs; capacity checked in validate
        let avail: Vec<(usize, usize)> = (0..n_utt)
            .flat_map(|a| (a + 1..n_utt).map(move |b| (a, b)))
            .filter(|&(a, b)| !seen.contains(&(spk, a, spk, b)))
            .collect();
        let Some(&(a, b)) = avail.get(rng.random_range(0..avail.len().max(1))) else {
            continue;
        };
        seen.insert((spk, a, spk, b));
        let (e, t) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        targets.push(Trial::new(true, utterance_id(spk, e), utterance_id(spk, t)));
    }
    let mut nontargets = Vec::with_capacity(n_nontarget);
    let mut attempts = 0usize;
    while nontargets.len() < n_nontarget {
        attempts += 1;
        if attempts > 1000 * (n_nontarget + 1) {
            return Err(CorpusError::Invalid(
                "could not draw enough distinct non-target trials".into(),
            ));
        }
        let spk_e = nontargets.len() % n_spk;
        let spk_t = (spk_e + rng.random_range(1..n_spk)) % n_spk;
        let (e, t) = (rng.random_range(0..n_utt), rng.random_range(0..n_utt));
        if seen.insert((spk_e, e, spk_t, t)) {
            nontargets.push(Trial::new(
                false,
                utterance_id(spk_e, e),
                utterance_id(spk_t, t),
            ));
        }
    }
    // interleave so any prefix stays roughly balanced
    let mut trials = Vec::with_capacity(cfg.n_trials);
    let mut nt = nontargets.into_iter();
    for t in targets {
        trials.push(t);
        trials.extend(nt.next());
    }
    trials.extend(nt);
    Ok(trials)
}

/// Generates the corpus and a balanced trial list; a pure function of `cfg`.
pub fn synth_corpus(cfg: &CorpusConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let speakers = draw_speakers(cfg);
    let jobs: Vec<(usize, usize)> = (0..cfg.n_speakers)
        .flat_map(|s| (0..cfg.utts_per_speaker).map(move |u| (s, u)))
        .collect();
    let utterances = jobs
        .par_iter()
        .map(|&(spk, utt)| {
            let mut rng = stream(cfg.seed, 2, (spk as u64) << 32 | utt as u64);
            Ok(Utterance {
                id: utterance_id(spk, utt),
                speaker: spk,
                waveform: synth_utterance(&speakers[spk], cfg, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>, CorpusError>>()?;
    let trials = if cfg.n_trials > 0 {
        draw_trials(cfg)?
    } else {
        Vec::new()
    };
    Ok(Corpus {
        config: *cfg,
        speakers,
        utterances,
        trials,
    })
}
