//! Vibration fault diagnosis for wind-turbine gearboxes.
//!
//! The crate implements a two-stage diagnosis pipeline for multi-channel
//! accelerometer recordings, together with a synthetic test-rig signal
//! generator used to exercise it end to end:
//!
//! - [`siggen`]: seeded synthetic drivetrain signals (tonal content per
//!   monitored component, configurable fault signatures, Gaussian noise).
//! - [`spectro`]: short-time Fourier transform, band-limited log-amplitude
//!   spectrograms, segment sampling, and labeled dataset assembly.
//! - [`fft`]: the discrete Fourier transform kernels behind [`spectro`]
//!   (iterative radix-2 plus Bluestein for arbitrary lengths).
//! - [`nnet`]: a small convolutional network (conv, max-pool, batch norm,
//!   dense, dropout, sigmoid) with exact backpropagation and Adam.
//! - [`iforest`]: isolation forests with signed anomaly scores.
//! - [`diagnose`]: the two stages wired together. Stage one detects
//!   anomalies with an isolation forest over CNN features and needs only
//!   healthy training data; stage two classifies per-component fault labels
//!   with the CNN and needs labeled fault observations.
//!
//! All randomness is seeded and all numeric paths are single-threaded, so
//! every result is reproducible bit for bit from a master seed.

pub mod archive;
pub mod diagnose;
pub mod error;
pub mod fft;
pub mod iforest;
pub mod nnet;
pub mod seeding;
pub mod siggen;
pub mod spectro;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testkit;
