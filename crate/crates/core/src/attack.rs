//! Basic iterative method (BIM) in the time domain.
//!
//! Budgets are given in 16-bit PCM amplitude units: `epsilon_int = 5` means
//! every sample may move by at most `5 / 32768` in normalized amplitude. The
//! attack runs exactly `K = ceil(epsilon_int / alpha_int)` sign-gradient
//! steps, raising the score of non-target trials and lowering it for target
//! trials. After each step the iterate is clipped to the L-infinity ball
//! around the original waveform and to `[-1, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asv::{AsvError, AsvModel, EnrolledScorer, Scorer};
use crate::dsp::Waveform;

/// Normalized amplitude of one PCM16 step is `1 / PCM16_SCALE`.
pub const PCM16_SCALE: f64 = 32768.0;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    Config(String),
    #[error(transparent)]
    Asv(#[from] AsvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// L-infinity budget in PCM16 units.
    pub epsilon_int: f64,
    /// Step size in PCM16 units.
    pub alpha_int: f64,
    /// Target trial: the attack lowers the score instead of raising it.
    pub is_tgt: bool,
    /// Round the result to the PCM16 grid (staying inside the budget).
    pub quantize: bool,
}

impl AttackConfig {
    pub fn new(epsilon_int: f64, alpha_int: f64, is_tgt: bool) -> Result<Self, AttackError> {
        let cfg = Self {
            epsilon_int,
            alpha_int,
            is_tgt,
            quantize: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.epsilon_int >= 0.0 && self.epsilon_int.is_finite()) {
            return Err(AttackError::Config(format!(
                "epsilon {} must be >= 0",
                self.epsilon_int
            )));
        }
        if !(self.alpha_int > 0.0 && self.alpha_int.is_finite()) {
            return Err(AttackError::Config(format!(
                "alpha {} must be > 0",
                self.alpha_int
            )));
        }
        Ok(())
    }

    /// `K = ceil(epsilon / alpha)`.
    pub fn iterations(&self) -> usize {
        let ratio = self.epsilon_int / self.alpha_int;
        (ratio - 1e-9).ceil().max(0.0) as usize
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon_int / PCM16_SCALE
    }

    pub fn alpha(&self) -> f64 {
        self.alpha_int / PCM16_SCALE
    }
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub adversarial: Waveform,
    /// Gradient steps actually taken.
    pub iterations: usize,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Runs BIM against a scorer with a fixed enrollment embedding.
pub fn bim_attack_enrolled(
    scorer: &EnrolledScorer<'_>,
    test: &Waveform,
    cfg: &AttackConfig,
) -> Result<AttackOutcome, AttackError> {
    cfg.validate()?;
    let (eps, alpha) = (cfg.epsilon(), cfg.alpha());
    let direction = if cfg.is_tgt { -1.0 } else { 1.0 };
    let original = test.samples();
    let mut x = test.clone();
    let mut iterations = 0;
    for _ in 0..cfg.iterations() {
        let (_, grad) = scorer.score_and_gradient(&x)?;
        let next: Vec<f64> = x
            .samples()
            .iter()
            .zip(&grad.0)
            .zip(original)
            .map(|((xi, g), x0)| {
                let stepped = xi + alpha * direction * sign(*g);
                stepped.clamp(x0 - eps, x0 + eps).clamp(-1.0, 1.0)
            })
            .collect();
        x = Waveform::new(next, test.sample_rate()).map_err(AsvError::from)?;
        iterations += 1;
    }
    if cfg.quantize && iterations > 0 {
        x = quantize_within(&x, test, eps)?;
    }
    Ok(AttackOutcome {
        adversarial: x,
        iterations,
    })
}

/// Rounds to the PCM16 grid, then pulls back inside `[x0 - eps, x0 + eps]`
/// along the grid. Samples whose ball holds no grid point keep `x0`.
fn quantize_within(x: &Waveform, original: &Waveform, eps: f64) -> Result<Waveform, AttackError> {
    let q: Vec<f64> = x
        .samples()
        .iter()
        .zip(original.samples())
        .map(|(v, x0)| {
            let grid = |u: f64| u.clamp(-PCM16_SCALE, PCM16_SCALE - 1.0);
            let lo = grid(((x0 - eps) * PCM16_SCALE - 1e-9).ceil());
            let hi = grid(((x0 + eps) * PCM16_SCALE + 1e-9).floor());
            if lo > hi {
                return *x0;
            }
            let r = grid((v * PCM16_SCALE).round());
            r.clamp(lo, hi) / PCM16_SCALE
        })
        .collect();
    Ok(Waveform::new(q, x.sample_rate()).map_err(AsvError::from)?)
}

/// BIM on one trial; the enrollment embedding is treated as constant.
pub fn bim_attack(
    test: &Waveform,
    enroll: &Waveform,
    model: &AsvModel,
    cfg: &AttackConfig,
) -> Result<Waveform, AttackError> {
    let scorer = model.scorer()?;
    let enrolled = scorer.enroll(enroll)?;
    Ok(bim_attack_enrolled(&enrolled, test, cfg)?.adversarial)
}

#[derive(Debug, Clone, Copy)]
pub struct AttackTrial<'a> {
    pub is_target: bool,
    pub enroll: &'a Waveform,
    pub test: &'a Waveform,
}

/// Attacked scores per budget, in trial order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub epsilons: Vec<f64>,
    /// `scores[e][i]`: score of trial `i` after attacking with `epsilons[e]`.
    pub scores: Vec<Vec<f64>>,
    /// `linf[e][i]`: `max |x_adv - x_t|` in normalized amplitude.
    pub linf: Vec<Vec<f64>>,
}

/// Attacks every trial at every budget; target trials get `is_tgt = 1`.
pub fn attack_success_sweep(
    trials: &[AttackTrial<'_>],
    model: &AsvModel,
    epsilons: &[f64],
    alpha_int: f64,
) -> Result<SweepResult, AttackError> {
    if epsilons.is_empty() {
        return Err(AttackError::Config("epsilon list is empty".into()));
    }
    let scorer = Scorer::new(model.clone())?;
    let per_trial: Vec<Vec<(f64, f64)>> = trials
        .par_iter()
        .map(|t| {
            let enrolled = scorer.enroll(t.enroll)?;
            epsilons
                .iter()
                .map(|&eps| {
                    let cfg = AttackConfig::new(eps, alpha_int, t.is_target)?;
                    let out = bim_attack_enrolled(&enrolled, t.test, &cfg)?;
                    Ok((
                        enrolled.score(&out.adversarial)?,
                        out.adversarial.max_abs_diff(t.test),
                    ))
                })
                .collect::<Result<Vec<_>, AttackError>>()
        })
        .collect::<Result<_, _>>()?;
    let column =
        |e: usize, pick: fn(&(f64, f64)) -> f64| per_trial.iter().map(|r| pick(&r[e])).collect();
    Ok(SweepResult {
        epsilons: epsilons.to_vec(),
        scores: (0..epsilons.len()).map(|e| column(e, |p| p.0)).collect(),
        linf: (0..epsilons.len()).map(|e| column(e, |p| p.1)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asv::FeatureConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> AsvModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = FeatureConfig::default();
        let (n, h, d) = (64, 16, 8);
        let mut draw = |len: usize, s: f64| (0..len).map(|_| rng.random_range(-s..s)).collect();
        AsvModel {
            features,
            hidden_dim: h,
            embedding_dim: d,
            w1: draw(h * n, 0.05),
            b1: draw(h, 0.5),
            w2: draw(d * h, 0.5),
        }
    }

    fn wave(seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new(
            (0..4000).map(|_| rng.random_range(-0.3..0.3)).collect(),
            16000,
        )
        .unwrap()
    }

    #[test]
    fn iteration_count_is_ceiling() {
        assert_eq!(AttackConfig::new(0.0, 1.0, false).unwrap().iterations(), 0);
        assert_eq!(AttackConfig::new(5.0, 1.0, false).unwrap().iterations(), 5);
        assert_eq!(AttackConfig::new(5.0, 2.0, false).unwrap().iterations(), 3);
        assert_eq!(
            AttackConfig::new(0.25, 0.25, false).unwrap().iterations(),
            1
        );
        assert!(AttackConfig::new(-1.0, 1.0, false).is_err());
        assert!(AttackConfig::new(1.0, 0.0, false).is_err());
    }

    #[test]
    fn zero_budget_is_identity() {
        let m = model(1);
        let x = wave(2);
        let cfg = AttackConfig::new(0.0, 1.0, false).unwrap();
        assert_eq!(bim_attack(&x, &wave(3), &m, &cfg).unwrap(), x);
    }

    #[test]
    fn budget_and_range_hold() {
        let m = model(4);
        let scorer = m.scorer().unwrap();
        let enrolled = scorer.enroll(&wave(5)).unwrap();
        let mut x = wave(6).into_samples();
        x[10] = 1.0; // at the range limit
        let x = Waveform::new(x, 16000).unwrap();
        for is_tgt in [false, true] {
            let cfg = AttackConfig::new(5.0, 1.0, is_tgt).unwrap();
            let out = bim_attack_enrolled(&enrolled, &x, &cfg).unwrap();
            assert_eq!(out.iterations, 5);
            assert!(out.adversarial.max_abs_diff(&x) <= 5.0 / 32768.0 + 1e-9);
            assert!(out.adversarial.samples().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn quantized_output_stays_on_grid_and_in_budget() {
        let m = model(7);
        let grid: Vec<f64> = wave(8)
            .samples()
            .iter()
            .map(|v| (v * PCM16_SCALE).round() / PCM16_SCALE)
            .collect();
        let x = Waveform::new(grid, 16000).unwrap();
        let mut cfg = AttackConfig::new(3.0, 0.7, false).unwrap();
        cfg.quantize = true;
        let adv = bim_attack(&x, &wave(9), &m, &cfg).unwrap();
        assert!(adv.max_abs_diff(&x) <= 3.0 / 32768.0 + 1e-9);
        for v in adv.samples() {
            let scaled = v * PCM16_SCALE;
            assert!((scaled - scaled.round()).abs() < 1e-6);
        }
    }

    #[test]
    fn small_step_raises_non_target_score() {
        let m = model(10);
        let scorer = m.scorer().unwrap();
        for seed in 0..5 {
            let enroll = wave(100 + seed);
            let x = wave(200 + seed);
            let enrolled = scorer.enroll(&enroll).unwrap();
            let before = enrolled.score(&x).unwrap();
            let cfg = AttackConfig::new(0.25, 0.25, false).unwrap();
            let adv = bim_attack_enrolled(&enrolled, &x, &cfg)
                .unwrap()
                .adversarial;
            assert!(enrolled.score(&adv).unwrap() >= before - 1e-6);
        }
    }

    #[test]
    fn sweep_zero_column_reproduces_clean_scores() {
        let m = model(11);
        let waves: Vec<Waveform> = (0..4).map(wave).collect();
        let trials: Vec<AttackTrial> = (0..3)
            .map(|i| AttackTrial {
                is_target: i % 2 == 0,
                enroll: &waves[i],
                test: &waves[i + 1],
            })
            .collect();
        let res = attack_success_sweep(&trials, &m, &[0.0, 2.0], 1.0).unwrap();
        let scorer = m.scorer().unwrap();
        for (i, t) in trials.iter().enumerate() {
            assert_eq!(res.scores[0][i], scorer.score(t.test, t.enroll).unwrap());
            assert!(res.linf[1][i] <= 2.0 / 32768.0 + 1e-9);
        }
        assert!(attack_success_sweep(&trials, &m, &[], 1.0).is_err());
    }
}
