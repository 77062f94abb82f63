//! The two diagnosis stages wired together, plus evaluation and
//! persistence.
//!
//! Stage one is one-class: a convolutional front end turns each
//! spectrogram segment into a feature vector, and an isolation forest
//! fitted on healthy features only scores new segments, flagging those
//! with a negative signed score as anomalous. The front end is either a
//! seeded random filter bank whose batch normalization is calibrated on
//! the healthy training data, or the front half of an already-trained
//! stage-two classifier.
//!
//! Stage two is supervised: the full network assigns each segment three
//! probabilities, one per monitored component (ring gear, low-speed-shaft
//! bearing, high-speed-shaft bearing), thresholded at 0.5 into per-
//! component fault verdicts. It requires training data containing both
//! classes for every component.
//!
//! Both stages persist to a bundle directory holding a JSON manifest with
//! per-file checksums next to the model payloads. Inference entry points
//! borrow models immutably and are safe to call from multiple threads;
//! training builds and returns fresh models.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive::write_atomic;
use crate::error::{Error, Result};
use crate::iforest::{AnomalyScore, ForestConfig, IsolationForest};
use crate::nnet::{
    train_multilabel, verdicts, CnnArchitecture, CnnModel, TrainConfig, TrainHistory, OUTPUTS,
};
use crate::seeding::derive_seed;
use crate::siggen::Health;
use crate::spectro::{LabeledDataset, SpectrogramSegment, StftConfig};

const KIND_PIPELINE: &str = "gearvib/pipeline";
const MANIFEST_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.json";
const EXTRACTOR_FILE: &str = "stage1_extractor.cnn";
const STAGE2_FILE: &str = "stage2_model.cnn";

/// Label column names in verdict order.
pub const COMPONENT_NAMES: [&str; OUTPUTS] = ["ring_gear", "lss_bearing", "hss_bearing"];

// ---------------------------------------------------------------------------
// Preprocessing fingerprint

/// The preprocessing recipe behind a set of segments: a model trained on
/// one recipe refuses segments produced by another instead of scoring
/// them silently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    /// Spectrogram configuration.
    pub stft: StftConfig,
    /// Source signal sample rate in Hz.
    pub sample_rate_hz: f64,
    /// Time frames per segment.
    pub frames: usize,
    /// Frequency bins per segment.
    pub bins: usize,
    /// Stacked channels per segment.
    pub channels: usize,
    /// Segment duration in seconds.
    pub duration_s: f64,
}

impl Fingerprint {
    /// Reads the fingerprint off a segment.
    pub fn of(segment: &SpectrogramSegment) -> Fingerprint {
        Fingerprint {
            stft: segment.stft,
            sample_rate_hz: segment.sample_rate_hz,
            frames: segment.frames,
            bins: segment.bins,
            channels: segment.channels,
            duration_s: segment.duration_s,
        }
    }

    /// Rejects a segment whose preprocessing differs, naming the first
    /// mismatching property.
    pub fn check(&self, segment: &SpectrogramSegment) -> Result<()> {
        let mismatch = if segment.stft != self.stft {
            Some(format!("stft config {:?} vs {:?}", segment.stft, self.stft))
        } else if segment.sample_rate_hz != self.sample_rate_hz {
            Some(format!(
                "sample rate {} Hz vs {} Hz",
                segment.sample_rate_hz, self.sample_rate_hz
            ))
        } else if segment.frames != self.frames {
            Some(format!("{} frames vs {}", segment.frames, self.frames))
        } else if segment.bins != self.bins {
            Some(format!("{} bins vs {}", segment.bins, self.bins))
        } else if segment.channels != self.channels {
            Some(format!("{} channels vs {}", segment.channels, self.channels))
        } else if segment.duration_s != self.duration_s {
            Some(format!("duration {} s vs {} s", segment.duration_s, self.duration_s))
        } else {
            None
        };
        match mismatch {
            Some(detail) => Err(Error::Data(format!(
                "segment preprocessing does not match the model's: {detail}"
            ))),
            None => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Stage 1: healthy-only anomaly detection

/// How the stage-1 feature extractor was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorMode {
    /// Seeded random filters with batchnorm statistics fitted on the
    /// healthy training segments.
    SeededRandom,
    /// The convolution front end of a trained stage-2 classifier, used
    /// exactly as trained.
    ReusedFromStage2,
}

/// Whether stage 1 scores whole stacked segments or each channel alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage1Scope {
    /// One forest over three-channel segments.
    Joint,
    /// One single-channel extractor shared by all channels, one forest
    /// per channel; a segment is anomalous if any channel is.
    PerChannel,
}

/// Where stage-1 training gets its feature extractor.
#[derive(Debug, Clone, Copy)]
pub enum ExtractorSource<'a> {
    /// Fresh seeded random filters, `conv_filters` of them.
    SeededRandom {
        /// Convolution filter count (4 or 16).
        conv_filters: usize,
    },
    /// Reuse the front end of this trained classifier (joint scope only:
    /// its input shape is the full stacked segment).
    Stage2(&'a CnnModel),
}

/// Stage-1 training configuration.
#[derive(Debug, Clone, Copy)]
pub struct Stage1Config<'a> {
    /// Extractor to materialize.
    pub extractor: ExtractorSource<'a>,
    /// Joint or per-channel scoring.
    pub scope: Stage1Scope,
    /// Forest shape parameters. The `seed` field inside is ignored; tree
    /// seeds derive from [`Stage1Config::seed`] so one master seed fixes
    /// the whole run.
    pub forest: ForestConfig,
    /// Master seed for extractor initialization and forest fitting.
    pub seed: u64,
}

impl Stage1Config<'static> {
    /// Default configuration: 16 seeded random filters, joint scope,
    /// default forest.
    pub fn seeded(seed: u64) -> Stage1Config<'static> {
        Stage1Config {
            extractor: ExtractorSource::SeededRandom { conv_filters: 16 },
            scope: Stage1Scope::Joint,
            forest: ForestConfig::default(),
            seed,
        }
    }
}

/// A trained healthy-only anomaly detector: feature extractor plus
/// fitted forest(s) plus the preprocessing they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Model {
    /// Feature extractor; only its conv → pool → batchnorm half is used.
    pub extractor: CnnModel,
    /// One forest (joint scope) or one per channel, in channel order.
    pub forests: Vec<IsolationForest>,
    /// How the extractor was obtained.
    pub mode: ExtractorMode,
    /// Joint or per-channel scoring.
    pub scope: Stage1Scope,
    /// Preprocessing of the training segments, enforced at detection.
    pub fingerprint: Fingerprint,
    /// Master seed of the training run.
    pub seed: u64,
}

impl Stage1Model {
    /// Consistency between the extractor and its forests: matching
    /// feature dimensions and a forest count that fits the scope.
    fn validate(&self) -> Result<()> {
        let expected = match self.scope {
            Stage1Scope::Joint => 1,
            Stage1Scope::PerChannel => self.fingerprint.channels,
        };
        if self.forests.len() != expected {
            return Err(Error::Integrity(format!(
                "{} forests for {:?} scope over {} channels",
                self.forests.len(),
                self.scope,
                self.fingerprint.channels
            )));
        }
        let feature_len = self.extractor.architecture.feature_len();
        for (i, forest) in self.forests.iter().enumerate() {
            if forest.dim != feature_len {
                return Err(Error::Integrity(format!(
                    "forest {i} scores {} dimensions but the extractor emits {feature_len}",
                    forest.dim
                )));
            }
        }
        Ok(())
    }
}

/// One stage-1 decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Signed anomaly score of the segment; under per-channel scope, the
    /// minimum (most anomalous) channel score.
    pub signed: f64,
    /// True when `signed` is negative.
    pub is_anomalous: bool,
    /// The underlying scores: one (joint) or one per channel.
    pub scores: Vec<AnomalyScore>,
    /// Identity of the scored segment.
    pub segment_id: String,
}

/// Positive health evidence for one-class training: healthy labels or
/// healthy origins; anything else is grounds for refusal.
fn assert_healthy(segment: &SpectrogramSegment, index: usize) -> Result<()> {
    if let Some(labels) = segment.labels {
        if labels.iter().any(|&l| l != 0) {
            return Err(Error::Data(format!(
                "segment {index} is labeled damaged ({labels:?}); stage-1 training is \
                 one-class and accepts only healthy segments"
            )));
        }
        return Ok(());
    }
    if !segment.origins.is_empty()
        && segment.origins.iter().all(|o| o.health == Some(Health::Healthy))
    {
        return Ok(());
    }
    if segment.origins.iter().any(|o| o.health == Some(Health::Damaged)) {
        return Err(Error::Data(format!(
            "segment {index} originates from a damaged recording; stage-1 training is \
             one-class and accepts only healthy segments"
        )));
    }
    Err(Error::Data(format!(
        "segment {index} carries no health evidence (no labels, no recorded origin \
         health); stage-1 training requires segments asserted healthy"
    )))
}

/// Collects the single-channel views a per-channel run extracts from.
fn channel_slices(segments: &[SpectrogramSegment]) -> Result<Vec<SpectrogramSegment>> {
    let mut slices = Vec::with_capacity(segments.len() * segments[0].channels);
    for segment in segments {
        for c in 0..segment.channels {
            slices.push(segment.channel_slice(c)?);
        }
    }
    Ok(slices)
}

/// Trains the anomaly detector on healthy segments only.
///
/// Every segment must be asserted healthy by its labels or its origin
/// health; any damaged or unattested segment is refused. The extractor is
/// materialized per the configuration (random filters get their batchnorm
/// calibrated on the training features; a reused stage-2 front end is
/// taken as trained), features are extracted, and the forest(s) fitted on
/// them. With the default contamination, no training segment scores as
/// anomalous.
pub fn stage1_train(
    segments: &[SpectrogramSegment],
    config: &Stage1Config,
) -> Result<Stage1Model> {
    let first = segments.first().ok_or_else(|| {
        Error::Data("stage-1 training needs at least one healthy segment".to_string())
    })?;
    for (i, segment) in segments.iter().enumerate() {
        if !segment.shape_matches(first) {
            return Err(Error::Shape(format!(
                "segment {i} does not match the first segment's shape or preprocessing"
            )));
        }
        assert_healthy(segment, i)?;
    }

    let fingerprint = Fingerprint::of(first);
    let (extractor, mode) = match config.extractor {
        ExtractorSource::SeededRandom { conv_filters } => {
            let channels = match config.scope {
                Stage1Scope::Joint => first.channels,
                Stage1Scope::PerChannel => 1,
            };
            let architecture = CnnArchitecture {
                conv_filters,
                ..CnnArchitecture::extractor(first.frames, first.bins, channels)
            };
            let mut model =
                CnnModel::new(architecture, derive_seed(config.seed, "stage1/extractor"))?;
            match config.scope {
                Stage1Scope::Joint => model.fit_batchnorm(segments)?,
                Stage1Scope::PerChannel => model.fit_batchnorm(&channel_slices(segments)?)?,
            }
            (model, ExtractorMode::SeededRandom)
        }
        ExtractorSource::Stage2(model) => {
            if config.scope == Stage1Scope::PerChannel {
                return Err(Error::Config(
                    "a reused stage-2 extractor takes whole stacked segments; per-channel \
                     scope needs a single-channel extractor"
                        .to_string(),
                ));
            }
            let arch = &model.architecture;
            if (arch.input_frames, arch.input_bins, arch.input_channels)
                != (first.frames, first.bins, first.channels)
            {
                return Err(Error::Shape(format!(
                    "reused extractor takes {}×{}×{} input but the segments are {}×{}×{}",
                    arch.input_frames,
                    arch.input_bins,
                    arch.input_channels,
                    first.frames,
                    first.bins,
                    first.channels
                )));
            }
            (model.clone(), ExtractorMode::ReusedFromStage2)
        }
    };

    let forests = match config.scope {
        Stage1Scope::Joint => {
            let rows = feature_rows(&extractor, segments)?;
            let forest_config = ForestConfig {
                seed: derive_seed(config.seed, "stage1/forest"),
                ..config.forest
            };
            vec![IsolationForest::fit(&rows, &forest_config)?]
        }
        Stage1Scope::PerChannel => {
            let mut forests = Vec::with_capacity(first.channels);
            for c in 0..first.channels {
                let slices: Vec<SpectrogramSegment> = segments
                    .iter()
                    .map(|s| s.channel_slice(c))
                    .collect::<Result<_>>()?;
                let rows = feature_rows(&extractor, &slices)?;
                let forest_config = ForestConfig {
                    seed: derive_seed(config.seed, &format!("stage1/forest/{c}")),
                    ..config.forest
                };
                forests.push(IsolationForest::fit(&rows, &forest_config)?);
            }
            forests
        }
    };

    let model = Stage1Model {
        extractor,
        forests,
        mode,
        scope: config.scope,
        fingerprint,
        seed: config.seed,
    };
    model.validate()?;
    Ok(model)
}

fn feature_rows(extractor: &CnnModel, segments: &[SpectrogramSegment]) -> Result<Vec<Vec<f64>>> {
    segments
        .iter()
        .map(|s| Ok(extractor.extract_features(s)?.values))
        .collect()
}

/// Scores one segment against the trained detector.
///
/// The segment's preprocessing must match the model's fingerprint; a
/// mismatch is an error, never a silent score. The segment is anomalous
/// when its signed score is negative.
pub fn stage1_detect(model: &Stage1Model, segment: &SpectrogramSegment) -> Result<Detection> {
    model.fingerprint.check(segment)?;
    let scores = match model.scope {
        Stage1Scope::Joint => {
            let features = model.extractor.extract_features(segment)?;
            vec![model.forests[0].score(&features.values)?]
        }
        Stage1Scope::PerChannel => {
            let mut scores = Vec::with_capacity(segment.channels);
            for (c, forest) in model.forests.iter().enumerate() {
                let slice = segment.channel_slice(c)?;
                let features = model.extractor.extract_features(&slice)?;
                scores.push(forest.score(&features.values)?);
            }
            scores
        }
    };
    let signed = scores.iter().map(|s| s.signed).fold(f64::INFINITY, f64::min);
    Ok(Detection {
        signed,
        is_anomalous: signed < 0.0,
        scores,
        segment_id: crate::nnet::segment_identity(segment),
    })
}

/// Scores a batch of segments; any single failure fails the batch.
pub fn stage1_detect_batch(
    model: &Stage1Model,
    segments: &[SpectrogramSegment],
) -> Result<Vec<Detection>> {
    segments.iter().map(|s| stage1_detect(model, s)).collect()
}

// ---------------------------------------------------------------------------
// Stage 2: supervised fault-type classification

/// Trains the multi-label classifier on a labeled dataset.
///
/// Every label column must contain both classes in the training split;
/// fault-type classification is performed only when fault observations
/// are available for every component, so a single-class column is refused
/// with per-column counts. The model is initialized from the training
/// seed and fitted on the training split with the validation split scored
/// each epoch.
pub fn stage2_train(
    dataset: &LabeledDataset,
    cfg: &TrainConfig,
    architecture: &CnnArchitecture,
) -> Result<(CnnModel, TrainHistory)> {
    let first = dataset.train.first().ok_or_else(|| {
        Error::Data("stage-2 training needs a non-empty training split".to_string())
    })?;
    if (architecture.input_frames, architecture.input_bins, architecture.input_channels)
        != (first.frames, first.bins, first.channels)
    {
        return Err(Error::Shape(format!(
            "architecture takes {}×{}×{} input but the training segments are {}×{}×{}",
            architecture.input_frames,
            architecture.input_bins,
            architecture.input_channels,
            first.frames,
            first.bins,
            first.channels
        )));
    }

    let n = dataset.train.len();
    let mut positives = [0usize; OUTPUTS];
    for (i, segment) in dataset.train.iter().enumerate() {
        let labels = segment.labels.ok_or_else(|| {
            Error::Data(format!("training segment {i} carries no labels"))
        })?;
        for (j, &l) in labels.iter().enumerate() {
            positives[j] += usize::from(l != 0);
        }
    }
    let balance = COMPONENT_NAMES
        .iter()
        .zip(positives)
        .map(|(name, p)| format!("{name} {p}/{n}"))
        .collect::<Vec<_>>()
        .join(", ");
    for (j, &p) in positives.iter().enumerate() {
        if p == 0 || p == n {
            let side = if p == 0 { "no" } else { "only" };
            return Err(Error::Data(format!(
                "label column {j} ({}) has {side} fault observations in the training split \
                 ({balance}); fault-type classification is performed only if sufficient \
                 fault observations are available for every component",
                COMPONENT_NAMES[j]
            )));
        }
    }

    let mut model = CnnModel::new(*architecture, derive_seed(cfg.seed, "stage2/init"))?;
    let history = train_multilabel(&mut model, &dataset.train, &dataset.validation, cfg)?;
    Ok((model, history))
}

/// One classified segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    /// Per-component fault probabilities, ordered (ring gear, LSS
    /// bearing, HSS bearing), each strictly inside (0, 1).
    pub probabilities: [f64; OUTPUTS],
    /// Per-component verdicts: 1 when the probability is at least 0.5.
    pub verdicts: [u8; OUTPUTS],
    /// Signed stage-1 anomaly score, when stage 1 was also run.
    pub stage1_signed: Option<f64>,
    /// Identity of the diagnosed segment.
    pub segment_id: String,
}

/// Classifies one segment with a trained stage-2 model.
pub fn stage2_diagnose(model: &CnnModel, segment: &SpectrogramSegment) -> Result<Diagnosis> {
    let probabilities = model.forward_infer(std::slice::from_ref(segment))?[0];
    Ok(Diagnosis {
        probabilities,
        verdicts: verdicts(&probabilities),
        stage1_signed: None,
        segment_id: crate::nnet::segment_identity(segment),
    })
}

/// Classifies a batch of segments, evaluated in chunks.
pub fn stage2_diagnose_batch(
    model: &CnnModel,
    segments: &[SpectrogramSegment],
) -> Result<Vec<Diagnosis>> {
    let mut out = Vec::with_capacity(segments.len());
    for chunk in segments.chunks(256) {
        for (probabilities, segment) in model.forward_infer(chunk)?.into_iter().zip(chunk) {
            out.push(Diagnosis {
                probabilities,
                verdicts: verdicts(&probabilities),
                stage1_signed: None,
                segment_id: crate::nnet::segment_identity(segment),
            });
        }
    }
    Ok(out)
}

/// Runs both stages on one segment: the stage-1 signed score is attached
/// to the stage-2 diagnosis.
pub fn diagnose_segment(
    stage1: &Stage1Model,
    stage2: &CnnModel,
    segment: &SpectrogramSegment,
) -> Result<Diagnosis> {
    let detection = stage1_detect(stage1, segment)?;
    let mut diagnosis = stage2_diagnose(stage2, segment)?;
    diagnosis.stage1_signed = Some(detection.signed);
    Ok(diagnosis)
}

// ---------------------------------------------------------------------------
// Evaluation metrics

/// Confusion counts and derived rates for one label column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    /// Predicted 1, truth 1.
    pub true_positives: u64,
    /// Predicted 1, truth 0.
    pub false_positives: u64,
    /// Predicted 0, truth 0.
    pub true_negatives: u64,
    /// Predicted 0, truth 1.
    pub false_negatives: u64,
    /// TP / (TP + FP); 1 when that denominator is 0 and FN = 0, else 0.
    pub precision: f64,
    /// TP / (TP + FN); 1 when that denominator is 0 and FP = 0, else 0.
    pub recall: f64,
    /// (TP + TN) / instances.
    pub accuracy: f64,
}

/// The zero-denominator convention: an undefined rate counts as perfect
/// only when the complementary error count is also zero.
fn rate(numerator: u64, denominator: u64, complementary_errors: u64) -> f64 {
    if denominator == 0 {
        return if complementary_errors == 0 { 1.0 } else { 0.0 };
    }
    numerator as f64 / denominator as f64
}

impl LabelMetrics {
    fn from_counts(tp: u64, fp: u64, tn: u64, fn_count: u64) -> LabelMetrics {
        let total = tp + fp + tn + fn_count;
        LabelMetrics {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_count,
            precision: rate(tp, tp + fp, fn_count),
            recall: rate(tp, tp + fn_count, fp),
            accuracy: rate(tp + tn, total, 0),
        }
    }
}

/// Evaluation results over a labeled test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Per-component metrics, ordered (ring gear, LSS bearing, HSS
    /// bearing).
    pub per_label: [LabelMetrics; OUTPUTS],
    /// Fraction of instances with all three verdicts correct.
    pub subset_accuracy: f64,
    /// Number of evaluated instances.
    pub instances: usize,
}

impl Metrics {
    /// Renders the metrics as CSV: one row per component, then an
    /// `overall` row whose counts are summed over components, whose
    /// precision and recall are micro-averaged under the same
    /// zero-denominator convention, and whose accuracy column holds the
    /// subset accuracy.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,tp,fp,tn,fn,precision,recall,accuracy\n");
        let mut totals = [0u64; 4];
        for (name, m) in COMPONENT_NAMES.iter().zip(&self.per_label) {
            out.push_str(&format!(
                "{name},{},{},{},{},{},{},{}\n",
                m.true_positives,
                m.false_positives,
                m.true_negatives,
                m.false_negatives,
                m.precision,
                m.recall,
                m.accuracy
            ));
            totals[0] += m.true_positives;
            totals[1] += m.false_positives;
            totals[2] += m.true_negatives;
            totals[3] += m.false_negatives;
        }
        let [tp, fp, tn, fn_count] = totals;
        out.push_str(&format!(
            "overall,{tp},{fp},{tn},{fn_count},{},{},{}\n",
            rate(tp, tp + fp, fn_count),
            rate(tp, tp + fn_count, fp),
            self.subset_accuracy
        ));
        out
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "instances evaluated: {}", self.instances)?;
        writeln!(
            f,
            "{:<12} {:>5} {:>5} {:>5} {:>5} {:>10} {:>10} {:>10}",
            "component", "tp", "fp", "tn", "fn", "precision", "recall", "accuracy"
        )?;
        for (name, m) in COMPONENT_NAMES.iter().zip(&self.per_label) {
            writeln!(
                f,
                "{name:<12} {:>5} {:>5} {:>5} {:>5} {:>10.6} {:>10.6} {:>10.6}",
                m.true_positives,
                m.false_positives,
                m.true_negatives,
                m.false_negatives,
                m.precision,
                m.recall,
                m.accuracy
            )?;
        }
        write!(f, "subset accuracy: {:.6}", self.subset_accuracy)
    }
}

/// Computes metrics from verdict rows against ground-truth rows.
///
/// Rows pair up by index; the lengths must match and every entry must be
/// 0 or 1.
pub fn evaluate_verdicts(
    predicted: &[[u8; OUTPUTS]],
    truth: &[[u8; OUTPUTS]],
) -> Result<Metrics> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions against {} ground-truth rows",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Data("nothing to evaluate: no instances".to_string()));
    }
    for (i, row) in predicted.iter().chain(truth.iter()).enumerate() {
        if row.iter().any(|&l| l > 1) {
            return Err(Error::Data(format!(
                "labels must be 0 or 1, found {row:?} at row {}",
                i % predicted.len()
            )));
        }
    }

    let mut tp = [0u64; OUTPUTS];
    let mut fp = [0u64; OUTPUTS];
    let mut tn = [0u64; OUTPUTS];
    let mut fn_count = [0u64; OUTPUTS];
    let mut subset_hits = 0usize;
    for (pred, actual) in predicted.iter().zip(truth) {
        if pred == actual {
            subset_hits += 1;
        }
        for j in 0..OUTPUTS {
            match (pred[j], actual[j]) {
                (1, 1) => tp[j] += 1,
                (1, 0) => fp[j] += 1,
                (0, 0) => tn[j] += 1,
                _ => fn_count[j] += 1,
            }
        }
    }

    let per_label =
        std::array::from_fn(|j| LabelMetrics::from_counts(tp[j], fp[j], tn[j], fn_count[j]));
    Ok(Metrics {
        per_label,
        subset_accuracy: subset_hits as f64 / predicted.len() as f64,
        instances: predicted.len(),
    })
}

/// Computes metrics for a batch of diagnoses against ground truth.
pub fn evaluate(diagnoses: &[Diagnosis], truth: &[[u8; OUTPUTS]]) -> Result<Metrics> {
    let predicted: Vec<[u8; OUTPUTS]> = diagnoses.iter().map(|d| d.verdicts).collect();
    evaluate_verdicts(&predicted, truth)
}

// ---------------------------------------------------------------------------
// Pipeline persistence

/// The trained artifacts of a pipeline run; either stage may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineBundle {
    /// Trained anomaly detector, if stage 1 was run.
    pub stage1: Option<Stage1Model>,
    /// Trained fault classifier, if stage 2 was run.
    pub stage2: Option<CnnModel>,
}

#[derive(Serialize, Deserialize)]
struct Stage1Meta {
    mode: ExtractorMode,
    scope: Stage1Scope,
    seed: u64,
    fingerprint: Fingerprint,
    extractor: String,
    forests: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: String,
    version: u32,
    components: Vec<String>,
    /// File name → SHA-256 of its full contents.
    files: BTreeMap<String, String>,
    stage1: Option<Stage1Meta>,
    stage2: Option<String>,
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Writes a bundle directory: a manifest with per-file checksums next to
/// the model payloads. The directory is created if needed; payloads and
/// manifest are each written atomically.
pub fn save_pipeline(bundle: &PipelineBundle, dir: &Path) -> Result<()> {
    if bundle.stage1.is_none() && bundle.stage2.is_none() {
        return Err(Error::Config("refusing to save an empty pipeline bundle".to_string()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut files = BTreeMap::new();
    let stage1 = match &bundle.stage1 {
        Some(model) => {
            model.validate()?;
            model.extractor.save(&dir.join(EXTRACTOR_FILE))?;
            files.insert(EXTRACTOR_FILE.to_string(), file_sha256(&dir.join(EXTRACTOR_FILE))?);
            let mut forest_files = Vec::new();
            for (c, forest) in model.forests.iter().enumerate() {
                let name = match model.scope {
                    Stage1Scope::Joint => "stage1_forest.json".to_string(),
                    Stage1Scope::PerChannel => format!("stage1_forest_{c}.json"),
                };
                forest.save(&dir.join(&name))?;
                files.insert(name.clone(), file_sha256(&dir.join(&name))?);
                forest_files.push(name);
            }
            Some(Stage1Meta {
                mode: model.mode,
                scope: model.scope,
                seed: model.seed,
                fingerprint: model.fingerprint,
                extractor: EXTRACTOR_FILE.to_string(),
                forests: forest_files,
            })
        }
        None => None,
    };
    let stage2 = match &bundle.stage2 {
        Some(model) => {
            model.save(&dir.join(STAGE2_FILE))?;
            files.insert(STAGE2_FILE.to_string(), file_sha256(&dir.join(STAGE2_FILE))?);
            Some(STAGE2_FILE.to_string())
        }
        None => None,
    };

    let manifest = Manifest {
        kind: KIND_PIPELINE.to_string(),
        version: MANIFEST_VERSION,
        components: COMPONENT_NAMES.iter().map(|s| s.to_string()).collect(),
        files,
        stage1,
        stage2,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Data(format!("manifest serialization failed: {e}")))?;
    bytes.push(b'\n');
    write_atomic(&dir.join(MANIFEST_FILE), &bytes)
}

/// Reads a bundle directory back, verifying the manifest checksums of
/// every listed file before any payload is parsed.
pub fn load_pipeline(dir: &Path) -> Result<PipelineBundle> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: manifest_path.clone(),
        location: "manifest".to_string(),
        message: e.to_string(),
    })?;
    if manifest.kind != KIND_PIPELINE {
        return Err(Error::Data(format!(
            "{}: manifest describes '{}', expected '{KIND_PIPELINE}'",
            manifest_path.display(),
            manifest.kind
        )));
    }
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Data(format!(
            "{}: manifest version {} is not the supported version {MANIFEST_VERSION}",
            manifest_path.display(),
            manifest.version
        )));
    }

    for (name, expected) in &manifest.files {
        let digest = file_sha256(&dir.join(name))?;
        if digest != *expected {
            return Err(Error::Integrity(format!(
                "{name}: checksum mismatch against the manifest (stored {expected}, \
                 computed {digest})"
            )));
        }
    }
    let listed = |name: &str| -> Result<()> {
        if manifest.files.contains_key(name) {
            Ok(())
        } else {
            Err(Error::Integrity(format!("{name} is referenced but not checksummed")))
        }
    };

    let stage1 = match &manifest.stage1 {
        Some(meta) => {
            listed(&meta.extractor)?;
            let extractor = CnnModel::load(&dir.join(&meta.extractor))?;
            let mut forests = Vec::with_capacity(meta.forests.len());
            for name in &meta.forests {
                listed(name)?;
                forests.push(IsolationForest::load(&dir.join(name))?);
            }
            let model = Stage1Model {
                extractor,
                forests,
                mode: meta.mode,
                scope: meta.scope,
                fingerprint: meta.fingerprint,
                seed: meta.seed,
            };
            model.validate()?;
            Some(model)
        }
        None => None,
    };
    let stage2 = match &manifest.stage2 {
        Some(name) => {
            listed(name)?;
            Some(CnnModel::load(&dir.join(name))?)
        }
        None => None,
    };
    if stage1.is_none() && stage2.is_none() {
        return Err(Error::Data(format!(
            "{}: manifest lists no models",
            manifest_path.display()
        )));
    }
    Ok(PipelineBundle { stage1, stage2 })
}

// ---------------------------------------------------------------------------
