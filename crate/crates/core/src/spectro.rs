//! Spectrograms, segment sampling, and dataset assembly.
//!
//! A recording becomes a short-time Fourier spectrogram: overlapping
//! windows of 0.25 s hopped every 0.05 s by default (so one second of
//! signal spans 16 frames), band-limited to 1 kHz, with log-amplitude
//! compression. Training instances are fixed-duration segments cut from
//! the spectrogram at frame-aligned offsets, stacked into three-channel
//! grids (one channel per monitored component) with one binary label per
//! channel.
//!
//! Dataset assembly samples segments with replacement, optionally mixing
//! healthy and damaged source recordings per channel so every label
//! combination occurs, then shuffles and splits into train/validation/test
//! partitions by requested ratios.
//!
//! # Example
//!
//! ```
//! use gearvib::siggen::{generate_signal, Health, RigProfile};
//! use gearvib::spectro::{stft, StftConfig};
//!
//! let rig = RigProfile::default();
//! let ts = generate_signal(&rig.components[0], &rig, Health::Healthy, 1.0, 7).unwrap();
//! let spec = stft(&ts, &StftConfig::default()).unwrap();
//! assert_eq!(spec.frames(), 16);
//! assert_eq!(spec.bins(), 251); // DC through 1 kHz at 4 Hz spacing
//! ```

use std::collections::BTreeMap;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftPlan;
use crate::seeding::derive_seed;
use crate::siggen::{exact_sample_count, Health, TimeSeries};

use std::f64::consts::PI;

/// Number of stacked channels in a multi-channel segment.
pub const CHANNELS: usize = 3;

/// Analysis window shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    /// Periodic Hann window; the default for analysis.
    Hann,
    /// All-ones window; preserves Parseval's identity exactly.
    Rectangular,
}

/// Short-time Fourier transform configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    /// Window length in seconds; must be an integer sample count.
    pub window_s: f64,
    /// Hop between successive windows in seconds; at most `window_s`.
    pub hop_s: f64,
    /// Window shape applied before each transform.
    pub window_fn: WindowFn,
    /// Highest retained frequency in Hz (at most Nyquist).
    pub fmax_hz: f64,
    /// Apply `log10(m + log_epsilon)` to each magnitude.
    pub log_amplitude: bool,
    /// Floor added before the logarithm.
    pub log_epsilon: f64,
}

impl Default for StftConfig {
    /// Four windows per second of new signal (0.25 s window, 0.05 s hop),
    /// Hann shape, 1 kHz band limit, log amplitudes.
    fn default() -> Self {
        StftConfig {
            window_s: 0.25,
            hop_s: 0.05,
            window_fn: WindowFn::Hann,
            fmax_hz: 1000.0,
            log_amplitude: true,
            log_epsilon: 1e-12,
        }
    }
}

impl StftConfig {
    /// Frequency spacing between bins: the reciprocal of the window length.
    pub fn bin_spacing_hz(&self) -> f64 {
        1.0 / self.window_s
    }
}

/// A band-limited magnitude spectrogram of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Magnitudes, frame-major: `magnitudes[frame * bins + bin]`.
    pub magnitudes: Vec<f64>,
    /// Start time of each frame in seconds.
    pub frame_times_s: Vec<f64>,
    /// Center frequency of each retained bin in Hz.
    pub bin_freqs_hz: Vec<f64>,
    /// Configuration the transform ran with.
    pub config: StftConfig,
    /// Sample rate of the source signal in Hz.
    pub sample_rate_hz: f64,
    /// Source channel (component) name.
    pub channel: String,
    /// Health of the source gearbox, when known.
    pub health: Option<Health>,
}

impl Spectrogram {
    /// Number of time frames.
    pub fn frames(&self) -> usize {
        self.frame_times_s.len()
    }

    /// Number of retained frequency bins.
    pub fn bins(&self) -> usize {
        self.bin_freqs_hz.len()
    }

    /// Magnitude at (frame, bin).
    pub fn at(&self, frame: usize, bin: usize) -> f64 {
        self.magnitudes[frame * self.bins() + bin]
    }
}

/// Where one segment channel was cut from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOrigin {
    /// Source channel (component) name.
    pub channel: String,
    /// Health of the source recording.
    pub health: Option<Health>,
    /// Frame index the segment starts at in the source spectrogram.
    pub frame_offset: usize,
}

/// A fixed-duration spectrogram excerpt, single- or three-channel.
///
/// Magnitudes are stored at archive precision (f32) so persisted segments
/// round-trip bit for bit; layout is frame-major, then bin, then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramSegment {
    /// Magnitudes: `magnitudes[(frame * bins + bin) * channels + channel]`.
    pub magnitudes: Vec<f32>,
    /// Number of time frames.
    pub frames: usize,
    /// Number of frequency bins.
    pub bins: usize,
    /// Number of stacked channels (1 before stacking, 3 after).
    pub channels: usize,
    /// Segment duration in seconds.
    pub duration_s: f64,
    /// Per-channel damage labels, once stacked: 1 = damaged.
    pub labels: Option<[u8; CHANNELS]>,
    /// Per-channel provenance.
    pub origins: Vec<SegmentOrigin>,
    /// STFT configuration of the source spectrogram.
    pub stft: StftConfig,
    /// Sample rate of the source signal in Hz.
    pub sample_rate_hz: f64,
}

impl SpectrogramSegment {
    /// Magnitude at (frame, bin, channel).
    pub fn at(&self, frame: usize, bin: usize, channel: usize) -> f32 {
        self.magnitudes[(frame * self.bins + bin) * self.channels + channel]
    }

    /// True when another segment has the same grid shape and preprocessing.
    pub fn shape_matches(&self, other: &SpectrogramSegment) -> bool {
        self.frames == other.frames
            && self.bins == other.bins
            && self.channels == other.channels
            && self.stft == other.stft
            && self.sample_rate_hz == other.sample_rate_hz
    }

    /// Extracts one channel as a single-channel segment. Labels do not
    /// carry over (they describe all channels jointly); the matching
    /// origin does.
    pub fn channel_slice(&self, channel: usize) -> Result<SpectrogramSegment> {
        if channel >= self.channels {
            return Err(Error::Shape(format!(
                "channel {channel} out of range for a {}-channel segment",
                self.channels
            )));
        }
        let mut magnitudes = Vec::with_capacity(self.frames * self.bins);
        for f in 0..self.frames {
            for b in 0..self.bins {
                magnitudes.push(self.at(f, b, channel));
            }
        }
        Ok(SpectrogramSegment {
            magnitudes,
            frames: self.frames,
            bins: self.bins,
            channels: 1,
            duration_s: self.duration_s,
            labels: None,
            origins: self.origins.get(channel).cloned().into_iter().collect(),
            stft: self.stft,
            sample_rate_hz: self.sample_rate_hz,
        })
    }
}

/// Computes the short-time Fourier spectrogram of a recording.
///
/// Frame `f` covers samples `[f·hop, f·hop + window)`; bins are retained
/// from DC up to `fmax_hz` inclusive. Window and hop lengths that do not
/// round to integer sample counts are rejected rather than silently
/// rounded.
pub fn stft(ts: &TimeSeries, config: &StftConfig) -> Result<Spectrogram> {
    let fs = ts.sample_rate_hz;
    if !(fs > 0.0) {
        return Err(Error::Config(format!("sample rate must be positive, got {fs}")));
    }
    let window_len = exact_sample_count(config.window_s, fs, "window_s")?;
    let hop_len = exact_sample_count(config.hop_s, fs, "hop_s")?;
    if hop_len > window_len {
        return Err(Error::Config(format!(
            "hop_s {} exceeds window_s {}",
            config.hop_s, config.window_s
        )));
    }
    if !(config.fmax_hz > 0.0) || config.fmax_hz > fs / 2.0 + 1e-9 {
        return Err(Error::Config(format!(
            "fmax_hz {} outside (0, Nyquist = {}]",
            config.fmax_hz,
            fs / 2.0
        )));
    }
    if config.log_amplitude && !(config.log_epsilon > 0.0) {
        return Err(Error::Config(format!(
            "log_epsilon must be positive when log_amplitude is on, got {}",
            config.log_epsilon
        )));
    }
    if ts.samples.len() < window_len {
        return Err(Error::Data(format!(
            "series of {} samples is shorter than one {window_len}-sample window",
            ts.samples.len()
        )));
    }

    let frames = (ts.samples.len() - window_len) / hop_len + 1;
    let bin_hz = fs / window_len as f64;
    let max_bin = ((config.fmax_hz / bin_hz + 1e-9).floor() as usize).min(window_len / 2);
    let bins = max_bin + 1;

    let window: Vec<f64> = match config.window_fn {
        WindowFn::Rectangular => vec![1.0; window_len],
        WindowFn::Hann => (0..window_len)
            .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / window_len as f64).cos()))
            .collect(),
    };

    let plan = FftPlan::new(window_len);
    let mut magnitudes = Vec::with_capacity(frames * bins);
    let mut buf = vec![num_complex::Complex64::new(0.0, 0.0); window_len];
    for f in 0..frames {
        let start = f * hop_len;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = num_complex::Complex64::new(ts.samples[start + i] * window[i], 0.0);
        }
        let spectrum = plan.forward(&buf);
        for bin in spectrum.iter().take(bins) {
            let m = bin.norm();
            magnitudes.push(if config.log_amplitude {
                (m + config.log_epsilon).log10()
            } else {
                m
            });
        }
    }

    Ok(Spectrogram {
        magnitudes,
        frame_times_s: (0..frames).map(|f| (f * hop_len) as f64 / fs).collect(),
        bin_freqs_hz: (0..bins).map(|k| k as f64 * bin_hz).collect(),
        config: *config,
        sample_rate_hz: fs,
        channel: ts.channel.clone(),
        health: ts.health,
    })
}

/// Number of frames a segment of `duration_s` spans, and the highest valid
/// start frame, for a given spectrogram.
fn segment_frame_geometry(spec: &Spectrogram, duration_s: f64) -> Result<(usize, usize)> {
    let fs = spec.sample_rate_hz;
    let window_len = exact_sample_count(spec.config.window_s, fs, "window_s")?;
    let hop_len = exact_sample_count(spec.config.hop_s, fs, "hop_s")?;
    let duration_len = exact_sample_count(duration_s, fs, "segment duration")?;
    if duration_len < window_len {
        return Err(Error::Config(format!(
            "segment duration {duration_s} s is shorter than the analysis window {} s",
            spec.config.window_s
        )));
    }
    let frames_per_segment = (duration_len - window_len) / hop_len + 1;
    if frames_per_segment > spec.frames() {
        return Err(Error::Data(format!(
            "segment duration {duration_s} s needs {frames_per_segment} frames but the \
             spectrogram spans only {}",
            spec.frames()
        )));
    }
    Ok((frames_per_segment, spec.frames() - frames_per_segment))
}

/// Cuts one single-channel segment starting at `frame_offset`.
fn slice_segment(
    spec: &Spectrogram,
    frame_offset: usize,
    frames_per_segment: usize,
    duration_s: f64,
) -> SpectrogramSegment {
    let bins = spec.bins();
    let mut magnitudes = Vec::with_capacity(frames_per_segment * bins);
    for f in frame_offset..frame_offset + frames_per_segment {
        for b in 0..bins {
            magnitudes.push(spec.at(f, b) as f32);
        }
    }
    SpectrogramSegment {
        magnitudes,
        frames: frames_per_segment,
        bins,
        channels: 1,
        duration_s,
        labels: None,
        origins: vec![SegmentOrigin {
            channel: spec.channel.clone(),
            health: spec.health,
            frame_offset,
        }],
        stft: spec.config,
        sample_rate_hz: spec.sample_rate_hz,
    }
}

/// Samples `count` segments of `duration_s` with replacement, at seeded
/// uniformly-random frame-aligned offsets.
///
/// Every segment contains all frames whose window lies fully inside the
/// segment's time span, which at the defaults makes a 1 s segment exactly
/// `floor((1.0 − 0.25)/0.05) + 1 = 16` frames.
pub fn sample_segments(
    spec: &Spectrogram,
    duration_s: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<SpectrogramSegment>> {
    if count == 0 {
        return Err(Error::Config("segment count must be at least 1".to_string()));
    }
    let (frames_per_segment, max_offset) = segment_frame_geometry(spec, duration_s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let offset = rng.gen_range(0..=max_offset);
            slice_segment(spec, offset, frames_per_segment, duration_s)
        })
        .collect())
}

/// Stacks three single-channel segments into one three-channel instance
/// with per-channel damage labels (order: ring gear, LSS bearing, HSS
/// bearing).
pub fn stack_channels(
    segments: [SpectrogramSegment; CHANNELS],
    labels: [u8; CHANNELS],
) -> Result<SpectrogramSegment> {
    for (i, seg) in segments.iter().enumerate() {
        if seg.channels != 1 {
            return Err(Error::Shape(format!(
                "stack input {i} already has {} channels",
                seg.channels
            )));
        }
        if !seg.shape_matches(&segments[0]) {
            return Err(Error::Shape(format!(
                "stack input {i} shape ({}×{}) or preprocessing disagrees with input 0 ({}×{})",
                seg.frames, seg.bins, segments[0].frames, segments[0].bins
            )));
        }
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Data(format!("labels must be 0 or 1, got {labels:?}")));
    }

    let frames = segments[0].frames;
    let bins = segments[0].bins;
    let mut magnitudes = vec![0.0f32; frames * bins * CHANNELS];
    for (c, seg) in segments.iter().enumerate() {
        for f in 0..frames {
            for b in 0..bins {
                magnitudes[(f * bins + b) * CHANNELS + c] = seg.at(f, b, 0);
            }
        }
    }
    Ok(SpectrogramSegment {
        magnitudes,
        frames,
        bins,
        channels: CHANNELS,
        duration_s: segments[0].duration_s,
        labels: Some(labels),
        origins: segments
            .iter()
            .flat_map(|s| s.origins.iter().cloned())
            .collect(),
        stft: segments[0].stft,
        sample_rate_hz: segments[0].sample_rate_hz,
    })
}

/// Healthy and damaged source spectrograms for one monitored component.
#[derive(Debug, Clone)]
pub struct ComponentSources {
    /// Component (channel) name.
    pub name: String,
    /// Spectrogram of the healthy recording.
    pub healthy: Spectrogram,
    /// Spectrogram of the damaged recording.
    pub damaged: Spectrogram,
}

/// How dataset assembly picks per-channel health states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixPolicy {
    /// Channels draw health independently, cycling through all 8 label
    /// combinations in balanced counts.
    PerChannel,
    /// Whole-gearbox labels only: all-healthy or all-damaged instances.
    WholeGearbox,
}

/// Dataset assembly parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    /// Total number of instances before splitting.
    pub total: usize,
    /// Train : validation : test ratio.
    pub ratios: (u32, u32, u32),
    /// Segment duration in seconds.
    pub segment_duration_s: f64,
    /// Seed for label assignment, offset draws, and the shuffle.
    pub seed: u64,
    /// Label mixing policy.
    pub mixing: MixPolicy,
}

/// A shuffled, partitioned multi-label dataset.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    /// Training partition.
    pub train: Vec<SpectrogramSegment>,
    /// Validation partition.
    pub validation: Vec<SpectrogramSegment>,
    /// Test partition.
    pub test: Vec<SpectrogramSegment>,
    /// Ratios the split was requested with.
    pub ratios: (u32, u32, u32),
    /// Shuffle seed.
    pub seed: u64,
}

impl LabeledDataset {
    /// Total instances across all partitions.
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    /// True when every partition is empty.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Diagnostics from a dataset build.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildReport {
    /// Instances assembled.
    pub instances: usize,
    /// Count per label combination, keyed e.g. "010".
    pub label_histogram: BTreeMap<String, usize>,
    /// Distinct frame offsets available across all source spectrograms.
    pub available_unique_offsets: usize,
    /// Human-readable warnings (never fatal).
    pub warnings: Vec<String>,
}

/// Splits `total` into partition sizes proportional to `ratios` by largest
/// remainder; sizes are exact for divisible totals and within ±1 otherwise.
pub fn partition_sizes(total: usize, ratios: (u32, u32, u32)) -> Result<(usize, usize, usize)> {
    let weights = [ratios.0 as f64, ratios.1 as f64, ratios.2 as f64];
    let sum: f64 = weights.iter().sum();
    if sum == 0.0 {
        return Err(Error::Config("split ratios must not all be zero".to_string()));
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut leftover = total - sizes.iter().sum::<usize>();
    // Assign leftovers by descending fractional part, earlier partition on ties.
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    Ok((sizes[0], sizes[1], sizes[2]))
}

fn validate_sources(sources: &[ComponentSources]) -> Result<()> {
    if sources.len() != CHANNELS {
        return Err(Error::Config(format!(
            "expected {CHANNELS} component sources, got {}",
            sources.len()
        )));
    }
    let reference = &sources[0].healthy;
    for source in sources {
        for spec in [&source.healthy, &source.damaged] {
            if spec.config != reference.config
                || spec.sample_rate_hz != reference.sample_rate_hz
                || spec.bins() != reference.bins()
            {
                return Err(Error::Shape(format!(
                    "source spectrogram '{}' disagrees with '{}' on preprocessing or bin count",
                    spec.channel, reference.channel
                )));
            }
        }
    }
    Ok(())
}

/// The label plan: balanced counts per combination, then a seeded shuffle.
fn label_plan(spec: &DatasetSpec) -> Vec<[u8; CHANNELS]> {
    let combos: Vec<[u8; CHANNELS]> = match spec.mixing {
        MixPolicy::PerChannel => (0u8..8)
            .map(|bits| [bits >> 2 & 1, bits >> 1 & 1, bits & 1])
            .collect(),
        MixPolicy::WholeGearbox => vec![[0, 0, 0], [1, 1, 1]],
    };
    let mut labels: Vec<[u8; CHANNELS]> = (0..spec.total)
        .map(|i| combos[i % combos.len()])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "dataset/labels"));
    labels.shuffle(&mut rng);
    labels
}

/// Assembles a labeled multi-label dataset from the six source spectrograms.
///
/// Each instance draws one frame-aligned offset (shared across channels)
/// and, per channel, cuts from the healthy or damaged source according to
/// the planned label vector. Instances are sampled with replacement,
/// shuffled, and split by `ratios`; partitions are disjoint by instance
/// identity though duplicate content may occur.
pub fn assemble_dataset(
    sources: &[ComponentSources],
    spec: &DatasetSpec,
) -> Result<(LabeledDataset, BuildReport)> {
    validate_sources(sources)?;
    if spec.total == 0 {
        return Err(Error::Config("dataset total must be at least 1".to_string()));
    }

    // Shared geometry: every source must admit the segment duration.
    let mut max_offset = usize::MAX;
    let mut frames_per_segment = 0;
    let mut available = 0usize;
    for source in sources {
        for side in [&source.healthy, &source.damaged] {
            let (fps, max_off) = segment_frame_geometry(side, spec.segment_duration_s)?;
            frames_per_segment = fps;
            max_offset = max_offset.min(max_off);
            available += max_off + 1;
        }
    }

    let labels = label_plan(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "dataset/offsets"));
    let mut instances = Vec::with_capacity(spec.total);
    let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
    for label in &labels {
        let offset = rng.gen_range(0..=max_offset);
        let channels: Vec<SpectrogramSegment> = sources
            .iter()
            .zip(label.iter())
            .map(|(source, &damaged)| {
                let side = if damaged == 1 { &source.damaged } else { &source.healthy };
                slice_segment(side, offset, frames_per_segment, spec.segment_duration_s)
            })
            .collect();
        let stacked = stack_channels(
            channels.try_into().expect("exactly three channels"),
            *label,
        )?;
        *histogram
            .entry(label.iter().map(|l| l.to_string()).collect())
            .or_insert(0) += 1;
        instances.push(stacked);
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "dataset/shuffle"));
    instances.shuffle(&mut shuffle_rng);

    let (n_train, n_val, n_test) = partition_sizes(spec.total, spec.ratios)?;
    let mut iter = instances.into_iter();
    let train: Vec<_> = iter.by_ref().take(n_train).collect();
    let validation: Vec<_> = iter.by_ref().take(n_val).collect();
    let test: Vec<_> = iter.collect();
    debug_assert_eq!(test.len(), n_test);

    let mut warnings = Vec::new();
    if available < spec.total / 10 {
        warnings.push(format!(
            "low pool diversity: {available} unique source offsets for {} instances",
            spec.total
        ));
    }

    Ok((
        LabeledDataset {
            train,
            validation,
            test,
            ratios: spec.ratios,
            seed: spec.seed,
        },
        BuildReport {
            instances: spec.total,
            label_histogram: histogram,
            available_unique_offsets: available,
            warnings,
        },
    ))
}

/// Anomaly-detection dataset parameters: healthy-only training plus a
/// held-out healthy/damaged test pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Spec {
    /// Healthy training instances.
    pub train_healthy: usize,
    /// Held-out healthy test instances.
    pub test_healthy: usize,
    /// Damaged test instances (all channels damaged).
    pub test_damaged: usize,
    /// Segment duration in seconds.
    pub segment_duration_s: f64,
    /// Seed for offset draws.
    pub seed: u64,
}

/// Segments for anomaly detection: healthy training data plus labeled test
/// pools.
#[derive(Debug, Clone)]
pub struct Stage1Dataset {
    /// All-healthy training instances, labels (0,0,0).
    pub train: Vec<SpectrogramSegment>,
    /// Held-out all-healthy test instances.
    pub test_healthy: Vec<SpectrogramSegment>,
    /// All-damaged test instances, labels (1,1,1).
    pub test_damaged: Vec<SpectrogramSegment>,
}

/// Assembles the anomaly-detection dataset from the six source
/// spectrograms: every instance is whole-gearbox (all channels share one
/// health state).
pub fn assemble_stage1_dataset(
    sources: &[ComponentSources],
    spec: &Stage1Spec,
) -> Result<(Stage1Dataset, BuildReport)> {
    validate_sources(sources)?;
    if spec.train_healthy == 0 {
        return Err(Error::Config(
            "stage-1 training requires at least one healthy instance".to_string(),
        ));
    }

    let mut max_offset = usize::MAX;
    let mut frames_per_segment = 0;
    let mut available = 0usize;
    for source in sources {
        for side in [&source.healthy, &source.damaged] {
            let (fps, max_off) = segment_frame_geometry(side, spec.segment_duration_s)?;
            frames_per_segment = fps;
            max_offset = max_offset.min(max_off);
            available += max_off + 1;
        }
    }

    let cut = |count: usize, health: Health, role: &str| -> Result<Vec<SpectrogramSegment>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, role));
        (0..count)
            .map(|_| {
                let offset = rng.gen_range(0..=max_offset);
                let label = if health == Health::Damaged { 1 } else { 0 };
                let channels: Vec<SpectrogramSegment> = sources
                    .iter()
                    .map(|source| {
                        let side = if health == Health::Damaged {
                            &source.damaged
                        } else {
                            &source.healthy
                        };
                        slice_segment(side, offset, frames_per_segment, spec.segment_duration_s)
                    })
                    .collect();
                stack_channels(
                    channels.try_into().expect("exactly three channels"),
                    [label; CHANNELS],
                )
            })
            .collect()
    };

    let train = cut(spec.train_healthy, Health::Healthy, "stage1/train")?;
    let test_healthy = cut(spec.test_healthy, Health::Healthy, "stage1/test-healthy")?;
    let test_damaged = cut(spec.test_damaged, Health::Damaged, "stage1/test-damaged")?;

    let total = spec.train_healthy + spec.test_healthy + spec.test_damaged;
    let mut warnings = Vec::new();
    if available < total / 10 {
        warnings.push(format!(
            "low pool diversity: {available} unique source offsets for {total} instances"
        ));
    }
    let mut histogram = BTreeMap::new();
    histogram.insert("000".to_string(), spec.train_healthy + spec.test_healthy);
    histogram.insert("111".to_string(), spec.test_damaged);

    Ok((
        Stage1Dataset {
            train,
            test_healthy,
            test_damaged,
        },
        BuildReport {
            instances: total,
            label_histogram: histogram,
            available_unique_offsets: available,
            warnings,
        },
    ))
}

// ---------------------------------------------------------------------------


#[cfg(test)]
mod proptest_spectro {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn retained_bins_nondecreasing_in_fmax(
            fmax_a in 1.0f64..2000.0,
            fmax_b in 1.0f64..2000.0,
        ) {
            let ts = TimeSeries {
                samples: vec![0.5; 4000],
                sample_rate_hz: 4000.0,
                channel: String::new(),
                health: None,
                seed: None,
            };
            let (lo, hi) = if fmax_a <= fmax_b { (fmax_a, fmax_b) } else { (fmax_b, fmax_a) };
            let config_lo = StftConfig { fmax_hz: lo, window_s: 0.25, hop_s: 0.25, ..StftConfig::default() };
            let config_hi = StftConfig { fmax_hz: hi, ..config_lo };
            let bins_lo = stft(&ts, &config_lo).unwrap().bins();
            let bins_hi = stft(&ts, &config_hi).unwrap().bins();
            prop_assert!(bins_lo <= bins_hi, "bins {} > {} for fmax {} <= {}", bins_lo, bins_hi, lo, hi);
        }

        #[test]
        fn log_transform_is_monotone(mags in proptest::collection::vec(0.0f64..1e4, 2..64)) {
            // log10(m + eps) must preserve every pairwise ordering.
            let eps = 1e-12;
            for pair in mags.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let (la, lb) = ((a + eps).log10(), (b + eps).log10());
                prop_assert_eq!(a < b, la < lb);
            }
        }
    }
}
