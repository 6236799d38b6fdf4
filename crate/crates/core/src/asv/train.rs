use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{normalize_backward, AsvError, AsvModel, FeatureConfig, FeatureExtractor};
use crate::detect::compute_eer;
use crate::dsp::Waveform;

#[derive(Debug, Clone)]
pub struct LabeledUtterance {
    pub speaker: usize,
    pub waveform: Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub steps: usize,
    /// Target pairs per step; the same number of non-target pairs is drawn.
    pub pairs_per_step: usize,
    /// Utterances per speaker held out for validation.
    pub holdout_per_speaker: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            embedding_dim: 32,
            learning_rate: 0.5,
            steps: 600,
            pairs_per_step: 64,
            holdout_per_speaker: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AsvModel,
    /// Validation EER of the seeded initialization.
    pub initial_eer: f64,
    pub validation_eer: f64,
}

/// Parameters in standardized-feature space.
struct Params {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
}

/// Trains the embedding network with squared loss `(s - y)^2` on sampled
/// pairs (`y = 1` same speaker, `y = 0` otherwise) by plain gradient descent.
///
/// Inputs are standardized per mel band and the first layer is kept
/// orthogonal to a uniform level shift, so a gain change of the waveform
/// leaves the embedding unchanged up to log-floor effects. The
/// standardization is folded into `w1`/`b1` of the returned model.
pub fn train_model(
    corpus: &[LabeledUtterance],
    features: FeatureConfig,
    hyper: &TrainConfig,
) -> Result<TrainOutcome, AsvError> {
    let mut by_speaker: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, u) in corpus.iter().enumerate() {
        by_speaker.entry(u.speaker).or_default().push(i);
    }
    if by_speaker.len() < 2 {
        return Err(AsvError::DegenerateCorpus(format!(
            "need at least 2 speakers, got {}",
            by_speaker.len()
        )));
    }
    if let Some((spk, utts)) = by_speaker.iter().find(|(_, u)| u.len() < 2) {
        return Err(AsvError::DegenerateCorpus(format!(
            "speaker {spk} has {} utterance(s), need at least 2",
            utts.len()
        )));
    }
    if hyper.embedding_dim < 2 || hyper.hidden_dim == 0 {
        return Err(AsvError::InvalidModel(
            "hidden_dim >= 1 and embedding_dim >= 2 required".into(),
        ));
    }

    let extractor = FeatureExtractor::new(features)?;
    let pooled: Vec<Vec<f64>> = corpus
        .par_iter()
        .map(|u| extractor.pooled(&u.waveform))
        .collect::<Result<_, _>>()?;

    // Split: the last `holdout` utterances of each speaker are validation,
    // always leaving at least one for training.
    let mut train_groups: Vec<Vec<usize>> = Vec::new();
    let mut holdout = Vec::new();
    for utts in by_speaker.values() {
        let keep = utts.len().saturating_sub(hyper.holdout_per_speaker).max(1);
        train_groups.push(utts[..keep].to_vec());
        holdout.extend_from_slice(&utts[keep..]);
    }
    let train_idx: Vec<usize> = train_groups.iter().flatten().copied().collect();

    let n = features.n_mels;
    let (mean, std) = standardization(&pooled, &train_idx, n);
    let inputs: Vec<Vec<f64>> = pooled
        .iter()
        .map(|p| {
            p.iter()
                .zip(&mean)
                .zip(&std)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let level_dir: Vec<f64> = std.iter().map(|s| 1.0 / s).collect();

    let (h, d) = (hyper.hidden_dim, hyper.embedding_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut gauss = |len: usize, scale: f64| -> Vec<f64> {
        (0..len)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect()
    };
    let mut params = Params {
        w1: gauss(h * n, 1.0 / (n as f64).sqrt()),
        b1: vec![0.0; h],
        w2: gauss(d * h, 1.0 / (h as f64).sqrt()),
    };
    project_rows(&mut params.w1, &level_dir);

    let validation = validation_pairs(corpus, &holdout);
    let initial_eer = pair_eer(
        &fold(&params, &mean, &std, features, h, d),
        &pooled,
        &validation,
    )?;

    let multi: Vec<&Vec<usize>> = train_groups.iter().filter(|g| g.len() >= 2).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x9e37_79b9_7f4a_7c15);
    for _ in 0..hyper.steps {
        let mut pairs = Vec::with_capacity(2 * hyper.pairs_per_step);
        for _ in 0..hyper.pairs_per_step {
            if !multi.is_empty() {
                let g = multi[rng.random_range(0..multi.len())];
                let a = rng.random_range(0..g.len());
                let mut b = rng.random_range(0..g.len() - 1);
                if b >= a {
                    b += 1;
                }
                pairs.push((g[a], g[b], 1.0));
            }
            let ga = rng.random_range(0..train_groups.len());
            let mut gb = rng.random_range(0..train_groups.len() - 1);
            if gb >= ga {
                gb += 1;
            }
            let (ga, gb) = (&train_groups[ga], &train_groups[gb]);
            pairs.push((
                ga[rng.random_range(0..ga.len())],
                gb[rng.random_range(0..gb.len())],
                0.0,
            ));
        }
        sgd_step(
            &mut params,
            &inputs,
            &pairs,
            hyper.learning_rate,
            features,
            h,
            d,
        )?;
        project_rows(&mut params.w1, &level_dir);
    }

    let model = fold(&params, &mean, &std, features, h, d);
    model.validate()?;
    let validation_eer = pair_eer(&model, &pooled, &validation)?;
    Ok(TrainOutcome {
        model,
        initial_eer,
        validation_eer,
    })
}

fn standardization(pooled: &[Vec<f64>], idx: &[usize], n: usize) -> (Vec<f64>, Vec<f64>) {
    let count = idx.len() as f64;
    let mut mean = vec![0.0; n];
    for &i in idx {
        for (m, v) in mean.iter_mut().zip(&pooled[i]) {
            *m += v / count;
        }
    }
    let mut var = vec![0.0; n];
    for &i in idx {
        for ((s, v), m) in var.iter_mut().zip(&pooled[i]).zip(&mean) {
            *s += (v - m).powi(2) / count;
        }
    }
    (mean, var.into_iter().map(|v| v.sqrt().max(1e-3)).collect())
}

/// Removes from every row its component along `dir`.
fn project_rows(w: &mut [f64], dir: &[f64]) {
    let dd: f64 = dir.iter().map(|v| v * v).sum();
    for row in w.chunks_exact_mut(dir.len()) {
        let c: f64 = row.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>() / dd;
        for (r, v) in row.iter_mut().zip(dir) {
            *r -= c * v;
        }
    }
}

/// Folds `(x - mean) / std` into the first layer.
fn fold(
    p: &Params,
    mean: &[f64],
    std: &[f64],
    features: FeatureConfig,
    h: usize,
    d: usize,
) -> AsvModel {
    let n = mean.len();
    let mut w1 = p.w1.clone();
    let mut b1 = p.b1.clone();
    for (row, b) in w1.chunks_exact_mut(n).zip(&mut b1) {
        for ((w, m), s) in row.iter_mut().zip(mean).zip(std) {
            *w /= s;
            *b -= *w * m;
        }
    }
    AsvModel {
        features,
        hidden_dim: h,
        embedding_dim: d,
        w1,
        b1,
        w2: p.w2.clone(),
    }
}

fn sgd_step(
    p: &mut Params,
    inputs: &[Vec<f64>],
    pairs: &[(usize, usize, f64)],
    lr: f64,
    features: FeatureConfig,
    h: usize,
    d: usize,
) -> Result<(), AsvError> {
    let n = features.n_mels;
    let model = AsvModel {
        features,
        hidden_dim: h,
        embedding_dim: d,
        w1: p.w1.clone(),
        b1: p.b1.clone(),
        w2: p.w2.clone(),
    };
    let mut fwd: BTreeMap<usize, super::EmbedForward> = BTreeMap::new();
    for &(a, b, _) in pairs {
        for i in [a, b] {
            if let std::collections::btree_map::Entry::Vacant(e) = fwd.entry(i) {
                e.insert(model.forward_pooled(&inputs[i])?);
            }
        }
    }
    let mut grad_e: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let scale = 1.0 / pairs.len() as f64;
    for &(a, b, y) in pairs {
        let (ea, eb) = (&fwd[&a].embedding, &fwd[&b].embedding);
        let s: f64 = ea.iter().zip(eb).map(|(x, z)| x * z).sum();
        let g = 2.0 * (s - y) * scale;
        for (i, other) in [(a, eb.clone()), (b, ea.clone())] {
            let acc = grad_e.entry(i).or_insert_with(|| vec![0.0; d]);
            for (o, v) in acc.iter_mut().zip(&other) {
                *o += g * v;
            }
        }
    }
    let mut gw1 = vec![0.0; h * n];
    let mut gb1 = vec![0.0; h];
    let mut gw2 = vec![0.0; d * h];
    for (i, ge) in &grad_e {
        let f = &fwd[i];
        let gz = normalize_backward(&f.embedding, f.norm, ge);
        for (row, g) in gw2.chunks_exact_mut(h).zip(&gz) {
            for (o, hv) in row.iter_mut().zip(&f.hidden) {
                *o += g * hv;
            }
        }
        let mut ga = vec![0.0; h];
        for (row, g) in p.w2.chunks_exact(h).zip(&gz) {
            for (o, w) in ga.iter_mut().zip(row) {
                *o += g * w;
            }
        }
        for (g, a) in ga.iter_mut().zip(&f.hidden) {
            *g *= 1.0 - a * a;
        }
        for ((row, g), gb) in gw1.chunks_exact_mut(n).zip(&ga).zip(&mut gb1) {
            *gb += g;
            for (o, x) in row.iter_mut().zip(&inputs[*i]) {
                *o += g * x;
            }
        }
    }
    for (w, g) in p.w1.iter_mut().zip(&gw1) {
        *w -= lr * g;
    }
    for (w, g) in p.b1.iter_mut().zip(&gb1) {
        *w -= lr * g;
    }
    for (w, g) in p.w2.iter_mut().zip(&gw2) {
        *w -= lr * g;
    }
    Ok(())
}

/// Each held-out utterance against every other utterance.
fn validation_pairs(corpus: &[LabeledUtterance], holdout: &[usize]) -> Vec<(usize, usize, bool)> {
    let mut pairs = Vec::new();
    for &i in holdout {
        for j in 0..corpus.len() {
            if j != i && !(holdout.contains(&j) && j < i) {
                pairs.push((i, j, corpus[i].speaker == corpus[j].speaker));
            }
        }
    }
    pairs
}

fn pair_eer(
    model: &AsvModel,
    pooled: &[Vec<f64>],
    pairs: &[(usize, usize, bool)],
) -> Result<f64, AsvError> {
    let emb: Vec<_> = pooled
        .iter()
        .map(|p| model.embed_pooled(p))
        .collect::<Result<_, _>>()?;
    let (mut tgt, mut non) = (Vec::new(), Vec::new());
    for &(a, b, same) in pairs {
        let s = emb[a].cosine(&emb[b]);
        if same {
            tgt.push(s);
        } else {
            non.push(s);
        }
    }
    compute_eer(&tgt, &non).map_err(|e| AsvError::DegenerateCorpus(e.to_string()))
}
