use std::f64::consts::PI;

use resynth_detect::harness::wav::pcm16_round_trip;
use resynth_detect::resynth::{
    external_vocoder_bridge, BridgeError, ResynthMethod, Resynthesizer, VocoderCommand,
};
use resynth_detect::Waveform;

const IDENTITY: &str = env!("CARGO_BIN_EXE_identity-vocoder");

fn tone(freq: f64, len: usize) -> Waveform {
    Waveform::new(
        (0..len)
            .map(|i| 0.3 * (2.0 * PI * freq * i as f64 / 16000.0).sin())
            .collect(),
        16000,
    )
    .unwrap()
}

#[test]
fn identity_vocoder_returns_inputs_within_one_lsb() {
    let x = tone(440.0, 8000);
    let y =
        external_vocoder_bridge(std::slice::from_ref(&x), &VocoderCommand::new(IDENTITY)).unwrap();
    assert_eq!(y.len(), 1);
    assert!(y[0].max_abs_diff(&x) <= 1.0 / 32768.0);
    assert_eq!(y[0], pcm16_round_trip(&x));
}

#[test]
fn outputs_keep_input_order() {
    let xs: Vec<Waveform> = [200.0, 700.0, 1900.0]
        .iter()
        .map(|f| tone(*f, 4000))
        .collect();
    let ys = external_vocoder_bridge(&xs, &VocoderCommand::new(IDENTITY)).unwrap();
    assert_eq!(ys.len(), 3);
    for (x, y) in xs.iter().zip(&ys) {
        assert!(x.max_abs_diff(y) <= 1.0 / 32768.0);
    }
}

#[test]
fn missing_output_names_the_index() {
    let xs: Vec<Waveform> = (0..3)
        .map(|i| tone(300.0 + 100.0 * i as f64, 2000))
        .collect();
    let cmd = VocoderCommand::new(IDENTITY).with_args(["--drop-index", "1"]);
    let err = external_vocoder_bridge(&xs, &cmd).unwrap_err();
    assert!(matches!(err, BridgeError::MissingOutput(1)), "{err}");
}

#[test]
fn wrong_output_rate_is_rejected() {
    let cmd = VocoderCommand::new(IDENTITY).with_args(["--force-rate", "22050"]);
    let err = external_vocoder_bridge(&[tone(440.0, 2000)], &cmd).unwrap_err();
    assert!(
        matches!(
            err,
            BridgeError::SampleRate {
                got: 22050,
                expected: 16000,
                ..
            }
        ),
        "{err}"
    );
}

#[test]
fn vocoder_method_runs_through_the_resynthesizer() {
    let method = ResynthMethod::vocoder(VocoderCommand::new(IDENTITY));
    let r = Resynthesizer::new(method, 16000).unwrap();
    let xs = vec![tone(500.0, 3000), tone(900.0, 5000)];
    let ys = r.apply_batch(&xs).unwrap();
    assert_eq!(ys[1].len(), 5000);
    assert!(xs[0].max_abs_diff(&ys[0]) <= 1.0 / 32768.0);
}
