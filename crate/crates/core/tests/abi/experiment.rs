use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use resynth_detect::detect::compute_eer;
use resynth_detect::harness::config::ExperimentConfig;
use resynth_detect::harness::experiment::{cache_path, render_report, run_experiment};

fn small(out_dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        seed: 3,
        out_dir: out_dir.to_path_buf(),
        corpus_speakers: 4,
        corpus_utts: 3,
        corpus_duration_s: 0.25,
        corpus_trials: 16,
        train_speakers: 6,
        train_utts: 3,
        train_steps: 20,
        gl_iterations: 8,
        epsilons: vec![5.0, 10.0],
        ..ExperimentConfig::default()
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != "timings.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn interrupted_cache_resumes_to_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let full = run_experiment(&cfg).unwrap();
    assert_eq!(full.timings.resumed_trials, 0);
    let before = files(dir.path());

    let cache = cache_path(dir.path());
    let text = fs::read_to_string(&cache).unwrap();
    let kept: Vec<&str> = text.lines().take(1 + 5).collect();
    fs::write(&cache, kept.join("\n") + "\n{\"index\": 5, \"trunc").unwrap();
    let resumed = run_experiment(&cfg).unwrap();
    assert_eq!(resumed.timings.resumed_trials, 5);
    assert_eq!(resumed.records, full.records);
    assert_eq!(files(dir.path()), before);

    let again = run_experiment(&cfg).unwrap();
    assert_eq!(again.timings.resumed_trials, 16);
    assert_eq!(files(dir.path()), before);
}

#[test]
fn changed_config_invalidates_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(dir.path())).unwrap();
    let other = ExperimentConfig {
        alpha: 2.0,
        ..small(dir.path())
    };
    assert_eq!(run_experiment(&other).unwrap().timings.resumed_trials, 0);
}

#[test]
fn report_renders_from_cache_and_refuses_partial_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&small(dir.path())).unwrap();
    let before = files(dir.path());
    assert_eq!(render_report(dir.path()).unwrap(), out.report);
    assert_eq!(files(dir.path()), before);

    let cache = cache_path(dir.path());
    let text = fs::read_to_string(&cache).unwrap();
    fs::write(
        &cache,
        text.lines().take(4).collect::<Vec<_>>().join("\n") + "\n",
    )
    .unwrap();
    assert!(render_report(dir.path()).is_err());
}

fn parse_f64(s: &str) -> f64 {
    match s {
        "-inf" => f64::NEG_INFINITY,
        _ => s.parse().unwrap(),
    }
}

/// Smallest genuine value (or -inf) whose false-positive rate is within budget.
fn scan_threshold(d_gen: &[f64], fpr: f64) -> f64 {
    let mut best = f64::INFINITY;
    for c in d_gen.iter().copied().chain([f64::NEG_INFINITY]) {
        let rate = d_gen.iter().filter(|d| **d > c).count() as f64 / d_gen.len() as f64;
        if rate <= fpr + 1e-12 && c < best {
            best = c;
        }
    }
    best
}

#[test]
fn thresholds_are_recomputable_from_genuine_scores_alone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        fpr_given: vec![0.5, 0.25, 0.1, 0.0],
        ..small(dir.path())
    };
    run_experiment(&cfg).unwrap();

    let scores = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    let mut lines = scores.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();

    let thresholds = fs::read_to_string(dir.path().join("thresholds.csv")).unwrap();
    let mut checked = 0;
    for line in thresholds.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (method, fpr, tau) = (f[0], parse_f64(f[1]), parse_f64(f[2]));
        let (s, s_prime) = (col("s"), col(&format!("{method}_s")));
        let d_gen: Vec<f64> = rows
            .iter()
            .map(|r| (parse_f64(r[s]) - parse_f64(r[s_prime])).abs())
            .collect();
        assert_eq!(tau, scan_threshold(&d_gen, fpr), "{line}");
        checked += 1;
    }
    assert_eq!(checked, 3 * 4);
}

#[test]
fn zero_budget_only_reports_the_genuine_eer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        epsilons: vec![0.0],
        ..small(dir.path())
    };
    let out = run_experiment(&cfg).unwrap();
    let rep = &out.report;
    assert!(rep.epsilons.is_empty());
    let (target, nontarget): (Vec<_>, Vec<_>) = out.records.iter().partition(|r| r.is_target);
    let eer = compute_eer(
        &target.iter().map(|r| r.genuine).collect::<Vec<_>>(),
        &nontarget.iter().map(|r| r.genuine).collect::<Vec<_>>(),
    )
    .unwrap();
    let none = rep.eer.iter().find(|r| r.method == "none").unwrap();
    assert_eq!(none.values, vec![eer]);
    assert!(rep.auc.iter().all(|r| r.values.is_empty()));
    assert!(rep.detection.iter().all(|r| r.values.is_empty()));
}
