//! Detection statistic, threshold calibration and evaluation metrics.
//!
//! An input is labelled adversarial when its score variation is strictly
//! greater than the threshold. The same strict comparison is used for the
//! false-positive rate on genuine data, the detection rate on adversarial
//! data and the ROC sweep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("{0} list is empty")]
    Empty(&'static str),
    #[error("false-positive budget {0} is outside [0, 1]")]
    InvalidFpr(f64),
    #[error("{0} contains a NaN")]
    NaN(&'static str),
}

/// `|s - s'|`.
pub fn score_variation(s: f64, s_prime: f64) -> f64 {
    (s - s_prime).abs()
}

/// Threshold calibrated on genuine score variations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionThreshold {
    /// `f64::NEG_INFINITY` flags every input.
    pub tau: f64,
    pub fpr_given: f64,
    pub achieved_fpr: f64,
}

impl DetectionThreshold {
    pub fn is_adversarial(&self, d: f64) -> bool {
        d > self.tau
    }
}

fn check(values: &[f64], what: &'static str) -> Result<(), MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty(what));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(MetricError::NaN(what));
    }
    Ok(())
}

fn fraction_above(values: &[f64], tau: f64) -> f64 {
    values.iter().filter(|v| **v > tau).count() as f64 / values.len() as f64
}

/// Picks the smallest threshold from the genuine values whose
/// false-positive rate does not exceed `fpr_given`.
///
/// With `I` genuine values and `m = floor(fpr_given * I)`, the threshold is
/// the `(m + 1)`-th largest value, or negative infinity when `m >= I`.
pub fn calibrate_threshold(
    d_gen: &[f64],
    fpr_given: f64,
) -> Result<DetectionThreshold, MetricError> {
    check(d_gen, "genuine")?;
    if !(0.0..=1.0).contains(&fpr_given) {
        return Err(MetricError::InvalidFpr(fpr_given));
    }
    let mut sorted = d_gen.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Guards against products like 0.29 * 100 = 28.999999999999996.
    let n = sorted.len() as f64;
    let mut m = (fpr_given * n + 1e-9).floor() as usize;
    while m > 0 && m as f64 / n > fpr_given {
        m -= 1;
    }
    let tau = sorted.get(m).copied().unwrap_or(f64::NEG_INFINITY);
    Ok(DetectionThreshold {
        tau,
        fpr_given,
        achieved_fpr: fraction_above(d_gen, tau),
    })
}

/// Fraction of adversarial score variations strictly above the threshold.
pub fn detection_rate(d_adv: &[f64], tau: &DetectionThreshold) -> Result<f64, MetricError> {
    check(d_adv, "adversarial")?;
    Ok(fraction_above(d_adv, tau.tau))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// `None` stands for +inf (first point) or -inf (last point).
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From (0, 0) to (1, 1), both coordinates non-decreasing.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC of the adversarial-vs-genuine detector over every distinct threshold.
pub fn roc_and_auc(d_gen: &[f64], d_adv: &[f64]) -> Result<RocCurve, MetricError> {
    check(d_gen, "genuine")?;
    check(d_adv, "adversarial")?;
    let mut gen = d_gen.to_vec();
    let mut adv = d_adv.to_vec();
    gen.sort_by(|a, b| b.total_cmp(a));
    adv.sort_by(|a, b| b.total_cmp(a));
    let mut thresholds: Vec<f64> = gen.iter().chain(&adv).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let (ng, na) = (gen.len() as f64, adv.len() as f64);
    let mut points = vec![RocPoint {
        threshold: None,
        fpr: 0.0,
        tpr: 0.0,
    }];
    // Walking thresholds downward: count values strictly above each one.
    let (mut ig, mut ia) = (0, 0);
    for &tau in &thresholds {
        while ig < gen.len() && gen[ig] > tau {
            ig += 1;
        }
        while ia < adv.len() && adv[ia] > tau {
            ia += 1;
        }
        points.push(RocPoint {
            threshold: Some(tau),
            fpr: ig as f64 / ng,
            tpr: ia as f64 / na,
        });
    }
    points.push(RocPoint {
        threshold: None,
        fpr: 1.0,
        tpr: 1.0,
    });
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Equal error rate with false accepts `nontarget >= tau` and false rejects
/// `target < tau`, linearly interpolated between the two candidate
/// thresholds that bracket the crossing.
pub fn compute_eer(target: &[f64], nontarget: &[f64]) -> Result<f64, MetricError> {
    check(target, "target")?;
    check(nontarget, "non-target")?;
    let mut tgt = target.to_vec();
    let mut non = nontarget.to_vec();
    tgt.sort_by(|a, b| a.total_cmp(b));
    non.sort_by(|a, b| a.total_cmp(b));
    let mut thresholds: Vec<f64> = tgt.iter().chain(&non).copied().collect();
    thresholds.sort_by(|a, b| a.total_cmp(b));
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (nt, nn) = (tgt.len() as f64, non.len() as f64);
    let (mut below_t, mut below_n) = (0, 0);
    let mut prev: Option<(f64, f64)> = None;
    for &tau in &thresholds {
        while below_t < tgt.len() && tgt[below_t] < tau {
            below_t += 1;
        }
        while below_n < non.len() && non[below_n] < tau {
            below_n += 1;
        }
        let far = 1.0 - below_n as f64 / nn;
        let frr = below_t as f64 / nt;
        if far <= frr {
            return Ok(match prev {
                Some((far0, frr0)) if far < frr => {
                    let (d0, d1) = (far0 - frr0, far - frr);
                    let lambda = d0 / (d0 - d1);
                    far0 + lambda * (far - far0)
                }
                _ => far,
            });
        }
        prev = Some((far, frr));
    }
    unreachable!("FAR reaches 0 and FRR reaches 1 at +inf")
}
