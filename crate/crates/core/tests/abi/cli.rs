use std::path::Path;
use std::process::{Command, Output};

use resynth_detect::harness::wav::{load_wav, pcm16_round_trip};

const BIN: &str = env!("CARGO_BIN_EXE_resynth-detect");

const SMALL: &str = "version = 1
corpus_speakers = 3
corpus_utts = 3
corpus_duration_s = 0.25
corpus_trials = 6
train_speakers = 6
train_utts = 3
train_steps = 20
";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn usage_errors_exit_1_with_usage_text() {
    let out = run(&["--no-such-flag", "experiment"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = 9").unwrap();
    assert_eq!(
        code(&run(&["--config", bad.to_str().unwrap(), "corpus"])),
        2
    );
    let out = dir.path().join("none");
    assert_eq!(
        code(&run(&["--out-dir", out.to_str().unwrap(), "report"])),
        2
    );
}

#[test]
fn bridge_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("voc.toml");
    std::fs::write(
        &cfg,
        format!(
            "version = 1\nvocoder_program = {:?}\nvocoder_args = [\"--drop-index\", \"0\"]\n",
            env!("CARGO_BIN_EXE_identity-vocoder")
        ),
    )
    .unwrap();
    let corpus = dir.path().join("c");
    let c = small_config(dir.path());
    assert_eq!(
        code(&run(&[
            "--config",
            &c,
            "--out-dir",
            corpus.to_str().unwrap(),
            "corpus"
        ])),
        0
    );
    let input = corpus.join("spk00/utt00.wav");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "resynth",
        "--method",
        "vocoder",
        "--input",
        input.to_str().unwrap(),
        "--output",
        dir.path().join("y.wav").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_budget_attack_writes_the_input_back() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    let corpus = dir.path().join("c");
    let model_dir = dir.path().join("m");
    assert_eq!(
        code(&run(&[
            "--config",
            &c,
            "--out-dir",
            corpus.to_str().unwrap(),
            "corpus"
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "--config",
            &c,
            "--out-dir",
            model_dir.to_str().unwrap(),
            "train"
        ])),
        0
    );
    let (enroll, test) = (
        corpus.join("spk00/utt00.wav"),
        corpus.join("spk01/utt01.wav"),
    );
    let adv = dir.path().join("adv.wav");
    let out = run(&[
        "attack",
        "--model",
        model_dir.join("model.json").to_str().unwrap(),
        "--enroll",
        enroll.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
        "--epsilon",
        "0",
        "--output",
        adv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let x = load_wav(&test).unwrap();
    let y = load_wav(&adv).unwrap();
    assert_eq!(y, pcm16_round_trip(&x));
}

#[test]
fn experiment_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&[
            "--config",
            &c,
            "--seed",
            "7",
            "--out-dir",
            out.to_str().unwrap(),
            "experiment",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "report.json",
        "table1_eer.csv",
        "table2_auc.csv",
        "table3_dr.csv",
        "hist_d.csv",
        "roc_eps20.csv",
    ] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let report = std::fs::read_to_string(a.join("report.json")).unwrap();
    assert!(report.contains("\"seed\": 7"));
}
