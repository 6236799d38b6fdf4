//! Re-synthesis based detection of adversarial attacks on speaker verification.
//!
//! A trial is scored once on the test utterance as given and once after the
//! utterance has been passed through a lossy re-synthesis transform
//! (Griffin-Lim from linear or mel magnitudes, a Gaussian filter, or an
//! external vocoder). Genuine inputs barely move; adversarially perturbed
//! inputs lose part of their crafted perturbation, so the score variation
//! `d = |s - s'|` separates the two. The detection threshold is calibrated on
//! genuine data only.
//!
//! Module map:
//!
//! * [`dsp`]: STFT/ISTFT, mel filterbank and its pseudo-inverse, Griffin-Lim,
//!   Gaussian smoothing.
//! * [`asv`]: a small differentiable speaker-verification scorer with
//!   analytic waveform gradients.
//! * [`attack`]: basic iterative method (sign-gradient, L-infinity clipped).
//! * [`resynth`]: the re-synthesis transforms and the external vocoder bridge.
//! * [`detect`]: score variation, threshold calibration, detection rate,
//!   ROC/AUC and EER.
//! * [`harness`]: WAV I/O, trial lists, the synthetic corpus, experiment
//!   runner and report rendering.

pub mod asv;
pub mod attack;
pub mod detect;
pub mod dsp;
pub mod harness;
pub mod resynth;

pub use dsp::Waveform;
