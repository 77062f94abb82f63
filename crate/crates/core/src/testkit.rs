//! Shared test oracles, compiled only for unit tests.
//!
//! These are deliberately naive reference implementations, kept independent
//! of the production code paths they check.

use num_complex::Complex64;

/// Direct O(N²) DFT: X[k] = Σ_j x[j] · exp(-2πi jk / n).
pub fn direct_dft(input: &[Complex64]) -> Vec<Complex64> {
    let n = input.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &x) in input.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (j as f64) * (k as f64) / n as f64;
                acc += x * Complex64::from_polar(1.0, phase);
            }
            acc
        })
        .collect()
}

/// Direct DFT of a real signal evaluated at a single bin.
pub fn direct_dft_bin(samples: &[f64], k: usize) -> Complex64 {
    let n = samples.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &x) in samples.iter().enumerate() {
        let phase = -2.0 * std::f64::consts::PI * (j as f64) * (k as f64) / n as f64;
        acc += Complex64::from_polar(x, phase);
    }
    acc
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seeding::derive_seed;
use crate::siggen::{generate_signal, Health, RigProfile};
use crate::spectro::{
    assemble_dataset, stft, ComponentSources, DatasetSpec, LabeledDataset, MixPolicy,
    SpectrogramSegment, StftConfig, CHANNELS,
};

/// The default rig resampled to 4 kHz: every tone and sideband stays below
/// the 2 kHz Nyquist, so the same profile works at a fraction of the cost.
pub fn mini_rig() -> RigProfile {
    let mut rig = RigProfile::default();
    rig.sample_rate_hz = 4000.0;
    rig.validate().expect("mini rig profile must be valid");
    rig
}

/// Healthy and damaged source spectrograms for all three components of the
/// 4 kHz mini rig.
pub fn mini_sources(duration_s: f64, seed: u64) -> Vec<ComponentSources> {
    let rig = mini_rig();
    let config = StftConfig::default();
    rig.components
        .iter()
        .map(|component| {
            let healthy = generate_signal(
                component,
                &rig,
                Health::Healthy,
                duration_s,
                derive_seed(seed, &format!("{}/healthy", component.name)),
            )
            .unwrap();
            let damaged = generate_signal(
                component,
                &rig,
                Health::Damaged,
                duration_s,
                derive_seed(seed, &format!("{}/damaged", component.name)),
            )
            .unwrap();
            ComponentSources {
                name: component.name.clone(),
                healthy: stft(&healthy, &config).unwrap(),
                damaged: stft(&damaged, &config).unwrap(),
            }
        })
        .collect()
}

/// A small labeled dataset (8:1:1 split, per-channel mixing, 1 s segments)
/// built from 4 s mini-rig recordings.
pub fn mini_labeled_dataset(total: usize, seed: u64) -> LabeledDataset {
    let sources = mini_sources(4.0, seed);
    let spec = DatasetSpec {
        total,
        ratios: (8, 1, 1),
        segment_duration_s: 1.0,
        seed,
        mixing: MixPolicy::PerChannel,
    };
    assemble_dataset(&sources, &spec).unwrap().0
}

/// A segment of seeded uniform noise in an arbitrary shape, for tests that
/// exercise shape handling rather than signal content.
pub fn noise_segment(
    frames: usize,
    bins: usize,
    channels: usize,
    labels: Option<[u8; CHANNELS]>,
    seed: u64,
) -> SpectrogramSegment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpectrogramSegment {
        magnitudes: (0..frames * bins * channels)
            .map(|_| rng.gen_range(-1.0f32..1.0))
            .collect(),
        frames,
        bins,
        channels,
        duration_s: 1.0,
        labels,
        origins: Vec::new(),
        stft: StftConfig::default(),
        sample_rate_hz: 40_000.0,
    }
}
