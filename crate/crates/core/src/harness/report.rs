//! Report tables and point files built from per-trial scores.
//!
//! Files written to the output directory:
//!
//! - `report.json`: every table below plus the configuration echo (with an
//!   empty `out_dir`, so the bytes do not depend on where the run was written)
//! - `table1_eer.csv`: ASV EER per method (`none` = no re-synthesis), columns `eps_0` (genuine) and each budget
//! - `table2_auc.csv`: detection AUC per method and budget
//! - `table3_dr.csv`: detection rate per false-positive budget, method and attack budget
//! - `thresholds.csv`: calibrated thresholds per method and false-positive budget
//! - `roc_eps<e>.csv`: ROC points per method for budget `e`
//! - `hist_d.csv`: score-variation histograms per method and class
//! - `control_dr.csv`: detection rate on noise-perturbed genuine inputs
//! - `scores.csv`: per-trial scores
//!
//! Thresholds of negative infinity are written as `null` in JSON and `-inf` in CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{io_error, ModelSummary, RunManifest, StageError, TrialRecord};
use crate::detect::{
    calibrate_threshold, compute_eer, detection_rate, roc_and_auc, score_variation, RocCurve,
};

pub const REPORT_FORMAT: &str = "resynth-detect-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub fpr_given: f64,
    pub method: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub method: String,
    pub fpr_given: f64,
    /// `None` is negative infinity.
    pub tau: Option<f64>,
    pub achieved_fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub method: String,
    pub snr_db: f64,
    pub fpr_given: f64,
    pub detection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub epsilon: f64,
    pub min_iterations: usize,
    pub max_iterations: usize,
    pub max_linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub method: String,
    pub genuine: f64,
    pub adversarial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSet {
    pub epsilon: f64,
    pub method: String,
    pub curve: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub method: String,
    /// `genuine` or `eps_<e>`.
    pub class: String,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub model: ModelSummary,
    pub n_trials: usize,
    pub n_target: usize,
    pub n_nontarget: usize,
    /// Attack budgets in PCM16 units; EER rows carry an extra leading genuine column.
    pub epsilons: Vec<f64>,
    pub methods: Vec<String>,
    pub eer: Vec<TableRow>,
    pub auc: Vec<TableRow>,
    pub detection: Vec<DetectionRow>,
    pub thresholds: Vec<ThresholdRow>,
    pub control: Vec<ControlRow>,
    pub attack: Vec<AttackRow>,
    pub median_d: Vec<MedianRow>,
    pub roc: Vec<RocSet>,
    pub histograms: Vec<Histogram>,
}

impl DetectionReport {
    pub fn row<'a>(table: &'a [TableRow], method: &str) -> Option<&'a [f64]> {
        table
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.values.as_slice())
    }
}

/// Genuine and per-budget adversarial score variations of method `m`.
pub fn score_variations(
    records: &[TrialRecord],
    m: usize,
    n_eps: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let gen = records
        .iter()
        .map(|r| score_variation(r.genuine, r.resynth_genuine[m]))
        .collect();
    let adv = (0..n_eps)
        .map(|e| {
            records
                .iter()
                .map(|r| score_variation(r.attacked[e], r.resynth_attacked[m][e]))
                .collect()
        })
        .collect();
    (gen, adv)
}

fn split_eer(
    records: &[TrialRecord],
    score: impl Fn(&TrialRecord) -> f64,
) -> Result<f64, StageError> {
    let (mut tgt, mut non) = (Vec::new(), Vec::new());
    for r in records {
        if r.is_target { &mut tgt } else { &mut non }.push(score(r));
    }
    Ok(compute_eer(&tgt, &non)?)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn histogram(method: &str, class: String, values: &[f64], hi: f64, bins: usize) -> Histogram {
    let width = hi / bins as f64;
    let edges = (0..=bins).map(|b| b as f64 * width).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let b = ((v / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram {
        method: method.to_string(),
        class,
        edges,
        counts,
    }
}

pub fn build_report(
    manifest: &RunManifest,
    records: &[TrialRecord],
) -> Result<DetectionReport, StageError> {
    if records.is_empty() {
        return Err(StageError::Invalid("no trial scores to report".into()));
    }
    let cfg = &manifest.config;
    let eps = &manifest.epsilons;
    let n_eps = eps.len();

    let mut eer = Vec::new();
    let mut none = vec![split_eer(records, |r| r.genuine)?];
    for e in 0..n_eps {
        none.push(split_eer(records, |r| r.attacked[e])?);
    }
    eer.push(TableRow {
        method: "none".into(),
        values: none,
    });
    for (m, name) in manifest.methods.iter().enumerate() {
        let mut row = vec![split_eer(records, |r| r.resynth_genuine[m])?];
        for e in 0..n_eps {
            row.push(split_eer(records, |r| r.resynth_attacked[m][e])?);
        }
        eer.push(TableRow {
            method: name.clone(),
            values: row,
        });
    }

    let mut auc = Vec::new();
    let mut detection = Vec::new();
    let mut thresholds = Vec::new();
    let mut control = Vec::new();
    let mut median_d = Vec::new();
    let mut roc = Vec::new();
    let mut histograms = Vec::new();
    for (m, name) in manifest.methods.iter().enumerate() {
        let (d_gen, d_adv) = score_variations(records, m, n_eps);
        let d_noisy: Vec<f64> = records
            .iter()
            .map(|r| score_variation(r.noisy, r.resynth_noisy[m]))
            .collect();
        let mut auc_row = Vec::new();
        for (e, d) in d_adv.iter().enumerate() {
            let curve = roc_and_auc(&d_gen, d)?;
            auc_row.push(curve.auc);
            roc.push(RocSet {
                epsilon: eps[e],
                method: name.clone(),
                curve,
            });
        }
        auc.push(TableRow {
            method: name.clone(),
            values: auc_row,
        });
        for &fpr in &cfg.fpr_given {
            // genuine variations only
            let tau = calibrate_threshold(&d_gen, fpr)?;
            thresholds.push(ThresholdRow {
                method: name.clone(),
                fpr_given: fpr,
                tau: tau.tau.is_finite().then_some(tau.tau),
                achieved_fpr: tau.achieved_fpr,
            });
            detection.push(DetectionRow {
                fpr_given: fpr,
                method: name.clone(),
                values: d_adv
                    .iter()
                    .map(|d| detection_rate(d, &tau))
                    .collect::<Result<_, _>>()?,
            });
            control.push(ControlRow {
                method: name.clone(),
                snr_db: cfg.control_snr_db,
                fpr_given: fpr,
                detection_rate: detection_rate(&d_noisy, &tau)?,
            });
        }
        median_d.push(MedianRow {
            method: name.clone(),
            genuine: median(&d_gen),
            adversarial: d_adv.iter().map(|d| median(d)).collect(),
        });
        let hi = d_gen
            .iter()
            .chain(d_adv.iter().flatten())
            .fold(0.0f64, |a, b| a.max(*b));
        let hi = if hi > 0.0 { hi } else { 1.0 };
        histograms.push(histogram(name, "genuine".into(), &d_gen, hi, cfg.hist_bins));
        for (e, d) in d_adv.iter().enumerate() {
            histograms.push(histogram(
                name,
                format!("eps_{}", eps[e]),
                d,
                hi,
                cfg.hist_bins,
            ));
        }
    }
    // grouped by false-positive budget, then method
    detection.sort_by(|a, b| b.fpr_given.total_cmp(&a.fpr_given));

    let attack = (0..n_eps)
        .map(|e| AttackRow {
            epsilon: eps[e],
            min_iterations: records.iter().map(|r| r.iterations[e]).min().unwrap_or(0),
            max_iterations: records.iter().map(|r| r.iterations[e]).max().unwrap_or(0),
            max_linf: records.iter().map(|r| r.linf[e]).fold(0.0, f64::max),
        })
        .collect();

    let n_target = records.iter().filter(|r| r.is_target).count();
    Ok(DetectionReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        seed: cfg.seed,
        config: ExperimentConfig {
            out_dir: Default::default(),
            ..cfg.clone()
        },
        model: manifest.model.clone(),
        n_trials: records.len(),
        n_target,
        n_nontarget: records.len() - n_target,
        epsilons: eps.clone(),
        methods: manifest.methods.clone(),
        eer,
        auc,
        detection,
        thresholds,
        control,
        attack,
        median_d,
        roc,
        histograms,
    })
}

fn tau_text(tau: Option<f64>) -> String {
    tau.map_or_else(|| "-inf".to_string(), |t| t.to_string())
}

fn join(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(",")
}

fn eps_columns(eps: &[f64]) -> String {
    join(eps.iter().map(|e| format!("eps_{e}")))
}

fn numbers(values: &[f64]) -> String {
    join(values.iter().map(f64::to_string))
}

fn table_csv(first: &str, columns: &str, rows: &[TableRow]) -> String {
    let mut out = format!("{first},{columns}\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.method, numbers(&r.values));
    }
    out
}

fn scores_csv(report: &DetectionReport, records: &[TrialRecord]) -> String {
    let mut header = vec![
        "index".to_string(),
        "label".into(),
        "enroll".into(),
        "test".into(),
        "s".into(),
        "s_noisy".into(),
    ];
    for m in &report.methods {
        header.push(format!("{m}_s"));
        header.push(format!("{m}_s_noisy"));
    }
    for e in &report.epsilons {
        header.push(format!("eps_{e}_s"));
        header.push(format!("eps_{e}_linf"));
        for m in &report.methods {
            header.push(format!("eps_{e}_{m}_s"));
        }
    }
    let mut out = join(header) + "\n";
    for r in records {
        let mut row = vec![
            r.index.to_string(),
            u8::from(r.is_target).to_string(),
            r.enroll_id.clone(),
            r.test_id.clone(),
            r.genuine.to_string(),
            r.noisy.to_string(),
        ];
        for m in 0..report.methods.len() {
            row.push(r.resynth_genuine[m].to_string());
            row.push(r.resynth_noisy[m].to_string());
        }
        for e in 0..report.epsilons.len() {
            row.push(r.attacked[e].to_string());
            row.push(r.linf[e].to_string());
            for m in 0..report.methods.len() {
                row.push(r.resynth_attacked[m][e].to_string());
            }
        }
        out += &join(row);
        out.push('\n');
    }
    out
}

/// Writes every report file; contents depend only on the report and records.
pub fn write_report(
    dir: &Path,
    report: &DetectionReport,
    manifest: &RunManifest,
    records: &[TrialRecord],
) -> Result<(), StageError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_error(&path))
    };
    let eps = &manifest.epsilons;
    write(
        "report.json",
        serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    )?;
    let mut eer_cols = vec![0.0];
    eer_cols.extend(eps);
    write(
        "table1_eer.csv",
        table_csv("method", &eps_columns(&eer_cols), &report.eer),
    )?;
    write(
        "table2_auc.csv",
        table_csv("method", &eps_columns(eps), &report.auc),
    )?;

    let mut t3 = format!("fpr_given,method,{}\n", eps_columns(eps));
    for r in &report.detection {
        let _ = writeln!(t3, "{},{},{}", r.fpr_given, r.method, numbers(&r.values));
    }
    write("table3_dr.csv", t3)?;

    let mut th = String::from("method,fpr_given,tau,achieved_fpr\n");
    for r in &report.thresholds {
        let _ = writeln!(
            th,
            "{},{},{},{}",
            r.method,
            r.fpr_given,
            tau_text(r.tau),
            r.achieved_fpr
        );
    }
    write("thresholds.csv", th)?;

    for &e in eps {
        let mut text = String::from("method,threshold,fpr,tpr\n");
        for set in report.roc.iter().filter(|s| s.epsilon == e) {
            let last = set.curve.points.len() - 1;
            for (k, p) in set.curve.points.iter().enumerate() {
                let threshold = match p.threshold {
                    Some(t) => t.to_string(),
                    None if k == last => "-inf".into(),
                    None => "inf".into(),
                };
                let _ = writeln!(text, "{},{threshold},{},{}", set.method, p.fpr, p.tpr);
            }
        }
        write(&format!("roc_eps{e}.csv"), text)?;
    }

    let mut hist = String::from("method,class,bin,lo,hi,count\n");
    for h in &report.histograms {
        for (b, c) in h.counts.iter().enumerate() {
            let _ = writeln!(
                hist,
                "{},{},{b},{},{},{c}",
                h.method,
                h.class,
                h.edges[b],
                h.edges[b + 1]
            );
        }
    }
    write("hist_d.csv", hist)?;

    let mut ctl = String::from("method,snr_db,fpr_given,detection_rate\n");
    for r in &report.control {
        let _ = writeln!(
            ctl,
            "{},{},{},{}",
            r.method, r.snr_db, r.fpr_given, r.detection_rate
        );
    }
    write("control_dr.csv", ctl)?;
    write("scores.csv", scores_csv(report, records))
}
