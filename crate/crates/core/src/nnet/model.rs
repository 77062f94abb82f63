//! The spectrogram CNN: architecture algebra, forward/backward passes,
//! feature extraction, and checkpointing.
//!
//! The network is fixed in shape: one valid 3×3 convolution (4 or 16
//! filters), one 2×2 max pool, per-filter batch normalization, ReLU, a
//! flatten, inverted dropout (training only), a 4-unit dense layer with
//! ReLU, and a 3-unit sigmoid output — one probability per monitored
//! component.
//!
//! Checkpoints are single files: a JSON manifest line with the
//! architecture, seeds, and training configuration, then a little-endian
//! f32 payload holding the tensors in a documented order (convolution
//! weights, convolution biases, batchnorm gamma, beta, running mean,
//! running variance, dense weights, dense biases, output weights, output
//! biases). Parameters are kept f32-representable at rest, so a save/load
//! round trip reproduces inference outputs bit for bit.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{read_container, write_container};
use crate::error::{Error, Result};
use crate::nnet::layers::{
    bce_grad_logits, bce_loss, dropout_mask, maxpool2x2, maxpool2x2_backward, relu_in_place,
    sigmoid, BatchNorm, BnCache, Conv2d, Dense, Grid3, KERNEL,
};
use crate::nnet::train::TrainConfig;
use crate::seeding::derive_seed;
use crate::spectro::SpectrogramSegment;

/// Output nodes: one per monitored component.
pub const OUTPUTS: usize = 3;
/// Hidden dense-layer width.
pub const DENSE_UNITS: usize = 4;
/// Default dropout rate on the flattened features.
pub const DROPOUT_RATE: f64 = 0.10;
/// Admissible convolution filter counts (classifier and extractor).
pub const FILTER_CHOICES: [usize; 2] = [4, 16];

/// Tensor names in gradient/optimizer order.
pub const PARAM_NAMES: [&str; 8] = [
    "conv_weights",
    "conv_biases",
    "bn_gamma",
    "bn_beta",
    "dense_weights",
    "dense_biases",
    "output_weights",
    "output_biases",
];

const KIND_CNN: &str = "gearvib/cnn";

/// Input and filter dimensions; everything else is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnArchitecture {
    /// Input time frames.
    pub input_frames: usize,
    /// Input frequency bins.
    pub input_bins: usize,
    /// Input channels.
    pub input_channels: usize,
    /// Convolution filter count (4 or 16).
    pub conv_filters: usize,
}

impl CnnArchitecture {
    /// The 4-filter classifier for a given input shape.
    pub fn classifier(frames: usize, bins: usize, channels: usize) -> CnnArchitecture {
        CnnArchitecture {
            input_frames: frames,
            input_bins: bins,
            input_channels: channels,
            conv_filters: 4,
        }
    }

    /// The 16-filter feature extractor for a given input shape.
    pub fn extractor(frames: usize, bins: usize, channels: usize) -> CnnArchitecture {
        CnnArchitecture {
            input_frames: frames,
            input_bins: bins,
            input_channels: channels,
            conv_filters: 16,
        }
    }

    /// Spatial shape after the valid 3×3 convolution.
    pub fn conv_output(&self) -> (usize, usize) {
        (self.input_frames - KERNEL + 1, self.input_bins - KERNEL + 1)
    }

    /// Spatial shape after 2×2 pooling (floor).
    pub fn pooled_output(&self) -> (usize, usize) {
        let (h, w) = self.conv_output();
        (h / 2, w / 2)
    }

    /// Flattened feature length: pooled area × filter count.
    pub fn feature_len(&self) -> usize {
        let (h, w) = self.pooled_output();
        h * w * self.conv_filters
    }

    /// Rejects shapes the fixed layer stack cannot process.
    pub fn validate(&self) -> Result<()> {
        if !FILTER_CHOICES.contains(&self.conv_filters) {
            return Err(Error::Config(format!(
                "filter count must be one of {FILTER_CHOICES:?}, got {}",
                self.conv_filters
            )));
        }
        if self.input_channels == 0 {
            return Err(Error::Config("input channel count must be at least 1".to_string()));
        }
        if self.input_frames < KERNEL + 1 || self.input_bins < KERNEL + 1 {
            return Err(Error::Config(format!(
                "input {}×{} leaves no complete 2×2 pooling window after {KERNEL}×{KERNEL} \
                 convolution",
                self.input_frames, self.input_bins
            )));
        }
        Ok(())
    }
}

/// A flattened post-batchnorm activation grid with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// Activations, length [`CnnArchitecture::feature_len`].
    pub values: Vec<f64>,
    /// Identity of the extracting model.
    pub model_id: String,
    /// Identity of the source segment.
    pub segment_id: String,
}

impl FeatureVector {
    /// Feature dimension.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True for an empty vector (never produced by a valid model).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-tensor gradients, ordered as [`PARAM_NAMES`].
#[derive(Debug, Clone)]
pub struct Gradients {
    /// One flat gradient per parameter tensor.
    pub tensors: Vec<Vec<f64>>,
}

/// Intermediates cached by a training-mode forward pass, consumed by
/// [`CnnModel::backward`].
#[derive(Debug, Clone)]
pub struct TrainCache {
    grids: Vec<Grid3>,
    conv_shape: (usize, usize, usize),
    pool_argmax: Vec<Vec<usize>>,
    bn_cache: BnCache,
    bn_relu_mask: Vec<bool>,
    dropout: Option<Vec<f64>>,
    flat: Vec<f64>,
    hidden_mask: Vec<bool>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
    rows: usize,
}

impl TrainCache {
    /// Sigmoid outputs of the cached pass, `rows × 3`, row-major.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }
}

/// The convolutional multi-label network.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    /// Input/filter dimensions.
    pub architecture: CnnArchitecture,
    /// Convolution layer.
    pub conv: Conv2d,
    /// Per-filter batch normalization.
    pub bn: BatchNorm,
    /// Hidden dense layer (features → 4).
    pub dense: Dense,
    /// Output layer (4 → 3).
    pub output: Dense,
    /// Dropout rate on flattened features during training.
    pub dropout_rate: f64,
    /// Seed the parameters were initialized from.
    pub init_seed: u64,
    /// Training configuration of the last completed training run.
    pub trained_with: Option<TrainConfig>,
}

impl CnnModel {
    /// Builds a model with seeded uniform fan-in-scaled weights
    /// (bound √(6/fan_in)) on the convolution and hidden dense layer,
    /// zero biases, identity batchnorm, and a zero output layer, then
    /// snaps every parameter to its nearest f32 value.
    ///
    /// The output layer starts at zero so the first optimizer steps grow
    /// it toward feature/label correlations while the layers below
    /// receive no gradient; once it is nonzero, hidden-layer updates are
    /// driven by real error signal instead of initialization noise. With
    /// random output weights and a hidden layer this narrow, adaptive
    /// per-coordinate steps early in training push hidden units into
    /// permanently negative pre-activations and the survivors cannot
    /// separate all the labels.
    pub fn new(architecture: CnnArchitecture, seed: u64) -> Result<CnnModel> {
        architecture.validate()?;
        let mut conv = Conv2d::zeros(architecture.input_channels, architecture.conv_filters);
        let mut dense = Dense::zeros(architecture.feature_len(), DENSE_UNITS);
        let output = Dense::zeros(DENSE_UNITS, OUTPUTS);
        let init = |tensor: &mut [f64], fan_in: usize, role: &str| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, role));
            for w in tensor {
                *w = rng.gen_range(-bound..bound);
            }
        };
        init(&mut conv.weights, KERNEL * KERNEL * architecture.input_channels, "init/conv");
        init(&mut dense.weights, architecture.feature_len(), "init/dense");
        let mut model = CnnModel {
            architecture,
            conv,
            bn: BatchNorm::new(architecture.conv_filters),
            dense,
            output,
            dropout_rate: DROPOUT_RATE,
            init_seed: seed,
            trained_with: None,
        };
        model.snap_params();
        Ok(model)
    }

    /// Short identity string for provenance records.
    pub fn id(&self) -> String {
        format!("cnn{}-{:016x}", self.architecture.conv_filters, self.init_seed)
    }

    /// Trainable tensors in [`PARAM_NAMES`] order.
    pub fn params_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.conv.weights,
            &mut self.conv.biases,
            &mut self.bn.gamma,
            &mut self.bn.beta,
            &mut self.dense.weights,
            &mut self.dense.biases,
            &mut self.output.weights,
            &mut self.output.biases,
        ]
    }

    /// Trainable tensor lengths in [`PARAM_NAMES`] order.
    pub fn param_shapes(&self) -> [usize; 8] {
        [
            self.conv.weights.len(),
            self.conv.biases.len(),
            self.bn.gamma.len(),
            self.bn.beta.len(),
            self.dense.weights.len(),
            self.dense.biases.len(),
            self.output.weights.len(),
            self.output.biases.len(),
        ]
    }

    /// Rounds every parameter and running statistic to its nearest f32
    /// value so checkpoints round-trip without loss.
    pub fn snap_params(&mut self) {
        for tensor in self.params_mut() {
            for v in tensor.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        for v in self.bn.running_mean.iter_mut().chain(self.bn.running_var.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }

    fn segment_grid(&self, segment: &SpectrogramSegment) -> Result<Grid3> {
        let a = &self.architecture;
        if segment.frames != a.input_frames
            || segment.bins != a.input_bins
            || segment.channels != a.input_channels
        {
            return Err(Error::Shape(format!(
                "segment {}×{}×{} does not match the model input {}×{}×{}",
                segment.frames,
                segment.bins,
                segment.channels,
                a.input_frames,
                a.input_bins,
                a.input_channels
            )));
        }
        Ok(Grid3 {
            h: segment.frames,
            w: segment.bins,
            c: segment.channels,
            data: segment.magnitudes.iter().map(|&m| m as f64).collect(),
        })
    }

    /// Runs conv → pool for each grid and concatenates the pooled maps
    /// into a `(n·ph·pw) × filters` matrix (also readable as an
    /// `n × feature_len` matrix).
    fn conv_pool(&self, grids: &[Grid3]) -> Result<(Vec<Vec<usize>>, Vec<f64>, (usize, usize, usize))> {
        let mut argmaxes = Vec::with_capacity(grids.len());
        let mut matrix = Vec::with_capacity(grids.len() * self.architecture.feature_len());
        let mut conv_shape = (0, 0, 0);
        for grid in grids {
            let conv_out = self.conv.forward(grid)?;
            conv_shape = (conv_out.h, conv_out.w, conv_out.c);
            let (pooled, argmax) = maxpool2x2(&conv_out)?;
            matrix.extend_from_slice(&pooled.data);
            argmaxes.push(argmax);
        }
        Ok((argmaxes, matrix, conv_shape))
    }

    /// Training-mode forward pass over a batch: batch-statistic
    /// normalization and (optionally) a fresh dropout mask. Running
    /// statistics absorb the batch only when `update_running` is set.
    fn forward_train_path(
        &self,
        bn: &mut BatchNorm,
        segments: &[&SpectrogramSegment],
        update_running: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<f64>, TrainCache)> {
        if segments.is_empty() {
            return Err(Error::Data("cannot run a forward pass on an empty batch".to_string()));
        }
        let grids: Vec<Grid3> = segments
            .iter()
            .map(|s| self.segment_grid(s))
            .collect::<Result<_>>()?;
        let (pool_argmax, mut matrix, conv_shape) = self.conv_pool(&grids)?;
        let bn_cache = bn.forward_train(&mut matrix, update_running)?;
        let bn_relu_mask = relu_in_place(&mut matrix);
        let rows = segments.len();
        let dropout = match dropout_rng {
            Some(rng) => {
                let mask = dropout_mask(matrix.len(), self.dropout_rate, rng)?;
                for (v, m) in matrix.iter_mut().zip(&mask) {
                    *v *= m;
                }
                Some(mask)
            }
            None => None,
        };
        let flat = matrix;
        let mut hidden = self.dense.forward(&flat, rows)?;
        let hidden_mask = relu_in_place(&mut hidden);
        let mut probs = self.output.forward(&hidden, rows)?;
        for p in &mut probs {
            *p = sigmoid(*p);
        }
        let cache = TrainCache {
            grids,
            conv_shape,
            pool_argmax,
            bn_cache,
            bn_relu_mask,
            dropout,
            flat,
            hidden_mask,
            hidden,
            probs: probs.clone(),
            rows,
        };
        Ok((probs, cache))
    }

    /// Training-mode forward pass that updates the running statistics and
    /// applies dropout from the given stream.
    pub fn forward_train(
        &mut self,
        segments: &[&SpectrogramSegment],
        dropout_rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, TrainCache)> {
        let mut bn = std::mem::replace(&mut self.bn, BatchNorm::new(0));
        let result = self.forward_train_path(&mut bn, segments, true, Some(dropout_rng));
        self.bn = bn;
        result
    }

    /// Batch loss on the training path with dropout disabled and running
    /// statistics untouched; the differentiation target of
    /// [`CnnModel::training_gradients`].
    pub fn training_loss(&self, segments: &[&SpectrogramSegment], labels: &[[u8; OUTPUTS]]) -> Result<f64> {
        let mut bn = self.bn.clone();
        let (probs, _) = self.forward_train_path(&mut bn, segments, false, None)?;
        bce_loss(&probs, &flatten_labels(labels, segments.len())?)
    }

    /// Exact gradients of [`CnnModel::training_loss`] for every parameter
    /// tensor.
    pub fn training_gradients(
        &self,
        segments: &[&SpectrogramSegment],
        labels: &[[u8; OUTPUTS]],
    ) -> Result<Gradients> {
        let mut bn = self.bn.clone();
        let (_, cache) = self.forward_train_path(&mut bn, segments, false, None)?;
        self.backward(&cache, labels)
    }

    /// Backpropagates the mean binary cross-entropy through the cached
    /// pass, returning gradients in [`PARAM_NAMES`] order.
    pub fn backward(&self, cache: &TrainCache, labels: &[[u8; OUTPUTS]]) -> Result<Gradients> {
        let label_flat = flatten_labels(labels, cache.rows)?;
        let dz = bce_grad_logits(&cache.probs, &label_flat);
        let (gw2, gb2, mut dhidden) = self.output.backward(&cache.hidden, &dz, cache.rows);
        for (g, &pass) in dhidden.iter_mut().zip(&cache.hidden_mask) {
            if !pass {
                *g = 0.0;
            }
        }
        let (gw1, gb1, mut dflat) = self.dense.backward(&cache.flat, &dhidden, cache.rows);
        if let Some(mask) = &cache.dropout {
            for (g, &m) in dflat.iter_mut().zip(mask) {
                *g *= m;
            }
        }
        for (g, &pass) in dflat.iter_mut().zip(&cache.bn_relu_mask) {
            if !pass {
                *g = 0.0;
            }
        }
        let (ggamma, gbeta) = self.bn.backward(&cache.bn_cache, &mut dflat);
        let mut gw_conv = vec![0.0; self.conv.weights.len()];
        let mut gb_conv = vec![0.0; self.conv.biases.len()];
        let per_sample = self.architecture.feature_len();
        let (ph, pw) = self.architecture.pooled_output();
        for (i, grid) in cache.grids.iter().enumerate() {
            let grad_pooled = Grid3 {
                h: ph,
                w: pw,
                c: self.architecture.conv_filters,
                data: dflat[i * per_sample..(i + 1) * per_sample].to_vec(),
            };
            let grad_conv =
                maxpool2x2_backward(cache.conv_shape, &cache.pool_argmax[i], &grad_pooled);
            self.conv.backward_params(grid, &grad_conv, &mut gw_conv, &mut gb_conv);
        }
        Ok(Gradients {
            tensors: vec![gw_conv, gb_conv, ggamma, gbeta, gw1, gb1, gw2, gb2],
        })
    }

    /// Inference-mode probabilities, one `[ring gear, LSS bearing, HSS
    /// bearing]` triple per segment; running-statistic normalization, no
    /// dropout.
    pub fn forward_infer(&self, segments: &[SpectrogramSegment]) -> Result<Vec<[f64; OUTPUTS]>> {
        if segments.is_empty() {
            return Err(Error::Data("cannot run a forward pass on an empty batch".to_string()));
        }
        let grids: Vec<Grid3> = segments
            .iter()
            .map(|s| self.segment_grid(s))
            .collect::<Result<_>>()?;
        let (_, mut matrix, _) = self.conv_pool(&grids)?;
        self.bn.forward_infer(&mut matrix)?;
        relu_in_place(&mut matrix);
        let rows = segments.len();
        let mut hidden = self.dense.forward(&matrix, rows)?;
        relu_in_place(&mut hidden);
        let logits = self.output.forward(&hidden, rows)?;
        Ok((0..rows)
            .map(|r| {
                let mut out = [0.0; OUTPUTS];
                for (j, o) in out.iter_mut().enumerate() {
                    *o = sigmoid(logits[r * OUTPUTS + j]);
                }
                out
            })
            .collect())
    }

    /// Flattened activations after conv → pool → batchnorm (running
    /// statistics, no ReLU), before any dense layer.
    pub fn extract_features(&self, segment: &SpectrogramSegment) -> Result<FeatureVector> {
        let grid = self.segment_grid(segment)?;
        let (_, mut matrix, _) = self.conv_pool(std::slice::from_ref(&grid))?;
        self.bn.forward_infer(&mut matrix)?;
        Ok(FeatureVector {
            values: matrix,
            model_id: self.id(),
            segment_id: segment_identity(segment),
        })
    }

    /// Replaces the running batchnorm statistics with the exact
    /// per-feature mean and biased variance of the pooled convolution
    /// outputs over `segments` (streamed, so any corpus size fits), then
    /// snaps them to f32. This calibrates a fixed random extractor to the
    /// data it will score.
    pub fn fit_batchnorm(&mut self, segments: &[SpectrogramSegment]) -> Result<()> {
        let filters = self.architecture.conv_filters;
        let mut count = 0u64;
        let mut mean = vec![0.0; filters];
        let mut m2 = vec![0.0; filters];
        for segment in segments {
            let grid = self.segment_grid(segment)?;
            let conv_out = self.conv.forward(&grid)?;
            let (pooled, _) = maxpool2x2(&conv_out)?;
            for row in pooled.data.chunks_exact(filters) {
                count += 1;
                for (f, &x) in row.iter().enumerate() {
                    let delta = x - mean[f];
                    mean[f] += delta / count as f64;
                    m2[f] += delta * (x - mean[f]);
                }
            }
        }
        if count < 2 {
            return Err(Error::Data(
                "batchnorm calibration needs at least 2 pooled rows".to_string(),
            ));
        }
        self.bn.running_mean = mean;
        self.bn.running_var = m2.iter().map(|&s| s / count as f64).collect();
        for v in self.bn.running_mean.iter_mut().chain(self.bn.running_var.iter_mut()) {
            *v = *v as f32 as f64;
        }
        Ok(())
    }

    /// Serializes the model to one checkpoint file (manifest + f32
    /// payload).
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CnnMeta {
            architecture: self.architecture,
            kernel: KERNEL,
            dense_units: DENSE_UNITS,
            outputs: OUTPUTS,
            dropout_rate: self.dropout_rate,
            init_seed: self.init_seed,
            trained_with: self.trained_with,
            parameter_order: PAYLOAD_ORDER.iter().map(|s| s.to_string()).collect(),
        };
        let mut payload = Vec::new();
        for tensor in self.payload_tensors() {
            for &v in tensor {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        write_container(path, KIND_CNN, &meta, &payload)
    }

    /// Loads a checkpoint written by [`CnnModel::save`], refusing version
    /// mismatches, corrupt payloads, and non-finite parameters.
    pub fn load(path: &Path) -> Result<CnnModel> {
        let (meta, payload): (CnnMeta, _) = read_container(path, KIND_CNN)?;
        if meta.kernel != KERNEL || meta.dense_units != DENSE_UNITS || meta.outputs != OUTPUTS {
            return Err(Error::Data(format!(
                "{}: checkpoint layer dims ({}, {}, {}) do not match this implementation",
                path.display(),
                meta.kernel,
                meta.dense_units,
                meta.outputs
            )));
        }
        meta.architecture.validate()?;
        let mut model = CnnModel::new(meta.architecture, meta.init_seed)?;
        model.dropout_rate = meta.dropout_rate;
        model.trained_with = meta.trained_with;
        let expected: usize = model.payload_tensors().iter().map(|t| t.len()).sum();
        if payload.len() != expected * 4 {
            return Err(Error::Integrity(format!(
                "{}: payload holds {} bytes, expected {}",
                path.display(),
                payload.len(),
                expected * 4
            )));
        }
        let mut values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        for tensor in model.payload_tensors_mut() {
            for v in tensor.iter_mut() {
                *v = values.next().expect("length checked above");
            }
        }
        let finite = model.payload_tensors().iter().all(|t| t.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Data(format!(
                "{}: checkpoint contains non-finite parameters",
                path.display()
            )));
        }
        Ok(model)
    }

    fn payload_tensors(&self) -> [&Vec<f64>; 10] {
        [
            &self.conv.weights,
            &self.conv.biases,
            &self.bn.gamma,
            &self.bn.beta,
            &self.bn.running_mean,
            &self.bn.running_var,
            &self.dense.weights,
            &self.dense.biases,
            &self.output.weights,
            &self.output.biases,
        ]
    }

    fn payload_tensors_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.conv.weights,
            &mut self.conv.biases,
            &mut self.bn.gamma,
            &mut self.bn.beta,
            &mut self.bn.running_mean,
            &mut self.bn.running_var,
            &mut self.dense.weights,
            &mut self.dense.biases,
            &mut self.output.weights,
            &mut self.output.biases,
        ]
    }
}

/// Checkpoint payload tensor order.
const PAYLOAD_ORDER: [&str; 10] = [
    "conv_weights",
    "conv_biases",
    "bn_gamma",
    "bn_beta",
    "bn_running_mean",
    "bn_running_var",
    "dense_weights",
    "dense_biases",
    "output_weights",
    "output_biases",
];

#[derive(Serialize, Deserialize)]
struct CnnMeta {
    architecture: CnnArchitecture,
    kernel: usize,
    dense_units: usize,
    outputs: usize,
    dropout_rate: f64,
    init_seed: u64,
    trained_with: Option<TrainConfig>,
    parameter_order: Vec<String>,
}

/// Per-label verdicts at the 0.5 threshold.
pub fn verdicts(probabilities: &[f64; OUTPUTS]) -> [u8; OUTPUTS] {
    let mut out = [0u8; OUTPUTS];
    for (v, &p) in out.iter_mut().zip(probabilities) {
        *v = u8::from(p >= 0.5);
    }
    out
}

fn flatten_labels(labels: &[[u8; OUTPUTS]], rows: usize) -> Result<Vec<f64>> {
    if labels.len() != rows {
        return Err(Error::Shape(format!(
            "{} label rows for a batch of {rows}",
            labels.len()
        )));
    }
    Ok(labels.iter().flatten().map(|&l| f64::from(l)).collect())
}

pub(crate) fn segment_identity(segment: &SpectrogramSegment) -> String {
    if segment.origins.is_empty() {
        return format!("segment-{}x{}x{}", segment.frames, segment.bins, segment.channels);
    }
    segment
        .origins
        .iter()
        .map(|o| format!("{}@{}", o.channel, o.frame_offset))
        .collect::<Vec<_>>()
        .join("+")
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{mini_sources, noise_segment};
    use crate::spectro::{sample_segments, stack_channels};

    fn small_arch() -> CnnArchitecture {
        CnnArchitecture::classifier(8, 10, 3)
    }

    fn batch3(seed: u64) -> (Vec<SpectrogramSegment>, Vec<[u8; OUTPUTS]>) {
        let segments: Vec<_> = (0..3)
            .map(|i| noise_segment(8, 10, 3, Some([1, 0, 1]), seed + i))
            .collect();
        let labels = vec![[1, 0, 1], [0, 1, 0], [0, 0, 0]];
        (segments, labels)
    }

    fn refs(segments: &[SpectrogramSegment]) -> Vec<&SpectrogramSegment> {
        segments.iter().collect()
    }

    /// New models start with a zero output layer, which silences every
    /// gradient below it; fill it in so a test exercises the whole path.
    fn randomize_output(model: &mut CnnModel, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in model.output.weights.iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
        model.snap_params();
    }

    // --- shape algebra ---

    #[test]
    fn default_input_feature_lengths() {
        let classifier = CnnArchitecture::classifier(16, 251, 3);
        assert_eq!(classifier.conv_output(), (14, 249));
        assert_eq!(classifier.pooled_output(), (7, 124));
        assert_eq!(classifier.feature_len(), 3472);
        let extractor = CnnArchitecture::extractor(16, 251, 3);
        assert_eq!(extractor.feature_len(), 13888);
    }

    #[test]
    fn architecture_rejects_bad_shapes() {
        assert!(CnnArchitecture::classifier(3, 251, 3).validate().is_err());
        assert!(CnnArchitecture::classifier(16, 3, 3).validate().is_err());
        assert!(CnnArchitecture::classifier(16, 251, 0).validate().is_err());
        let odd_filters = CnnArchitecture { conv_filters: 5, ..small_arch() };
        assert!(odd_filters.validate().is_err());
    }

    // --- forward ---

    #[test]
    fn zeroed_model_outputs_one_half_everywhere() {
        let mut model = CnnModel::new(small_arch(), 1).unwrap();
        for tensor in model.params_mut() {
            tensor.iter_mut().for_each(|v| *v = 0.0);
        }
        let (segments, _) = batch3(10);
        for probs in model.forward_infer(&segments).unwrap() {
            assert_eq!(probs, [0.5; 3]);
        }
    }

    #[test]
    fn probabilities_stay_strictly_inside_unit_interval() {
        let mut model = CnnModel::new(small_arch(), 2).unwrap();
        randomize_output(&mut model, 21);
        let (segments, _) = batch3(20);
        for probs in model.forward_infer(&segments).unwrap() {
            for p in probs {
                assert!(p > 0.0 && p < 1.0);
            }
        }
    }

    #[test]
    fn inference_ignores_the_dropout_rate() {
        let mut a = CnnModel::new(small_arch(), 3).unwrap();
        randomize_output(&mut a, 31);
        let b = a.clone();
        a.dropout_rate = 0.75;
        let (segments, _) = batch3(30);
        assert_eq!(a.forward_infer(&segments).unwrap(), b.forward_infer(&segments).unwrap());
    }

    #[test]
    fn forward_rejects_mismatched_segments() {
        let model = CnnModel::new(small_arch(), 4).unwrap();
        let wrong = vec![noise_segment(8, 11, 3, None, 40)];
        let err = model.forward_infer(&wrong).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        assert!(err.to_string().contains("11"));
    }

    // --- gradients ---

    #[test]
    fn composed_network_gradients_match_finite_differences() {
        let mut model = CnnModel::new(small_arch(), 5).unwrap();
        randomize_output(&mut model, 52);
        // Calibrated running stats are irrelevant here (batch-stat path),
        // but make gamma/beta non-trivial so their gradients are exercised.
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for g in model.bn.gamma.iter_mut() {
            *g = rng.gen_range(0.5..1.5);
        }
        for b in model.bn.beta.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        let (segments, labels) = batch3(51);
        let segment_refs = refs(&segments);
        let grads = model.training_gradients(&segment_refs, &labels).unwrap();
        let step = 1e-4;
        let mut checked = 0usize;
        for t in 0..8 {
            let len = model.param_shapes()[t];
            for i in 0..len {
                let analytic = grads.tensors[t][i];
                let mut plus = model.clone();
                plus.params_mut()[t][i] += step;
                let mut minus = model.clone();
                minus.params_mut()[t][i] -= step;
                let numeric = (plus.training_loss(&segment_refs, &labels).unwrap()
                    - minus.training_loss(&segment_refs, &labels).unwrap())
                    / (2.0 * step);
                let rel =
                    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    rel < 1e-4,
                    "{}[{i}]: analytic {analytic}, numeric {numeric}, rel {rel}",
                    PARAM_NAMES[t]
                );
                checked += 1;
            }
        }
        assert_eq!(checked, model.param_shapes().iter().sum::<usize>());
    }

    #[test]
    fn gradients_vanish_at_a_clamp_free_optimum() {
        // Output weights zero and biases at ±14 put every probability
        // within ~8e-7 of its label without engaging the clamp.
        let mut model = CnnModel::new(small_arch(), 6).unwrap();
        model.output.weights.iter_mut().for_each(|w| *w = 0.0);
        let labels = vec![[1u8, 0, 1]; 3];
        model.output.biases = vec![14.0, -14.0, 14.0];
        let (segments, _) = batch3(60);
        let grads = model.training_gradients(&refs(&segments), &labels).unwrap();
        for (t, tensor) in grads.tensors.iter().enumerate() {
            for &g in tensor {
                assert!(g.abs() < 1e-6, "{} gradient {g} not stationary", PARAM_NAMES[t]);
            }
        }
    }

    #[test]
    fn duplicating_the_batch_preserves_mean_gradients() {
        let mut model = CnnModel::new(small_arch(), 7).unwrap();
        randomize_output(&mut model, 71);
        let (segments, labels) = batch3(70);
        let single = model.training_gradients(&refs(&segments), &labels).unwrap();
        let doubled_segments: Vec<_> =
            segments.iter().chain(segments.iter()).cloned().collect();
        let doubled_labels: Vec<_> = labels.iter().chain(labels.iter()).copied().collect();
        let doubled = model
            .training_gradients(&refs(&doubled_segments), &doubled_labels)
            .unwrap();
        for (a, b) in single.tensors.iter().zip(&doubled.tensors) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    // --- features ---

    #[test]
    fn identical_segments_give_identical_features() {
        let model = CnnModel::new(CnnArchitecture::extractor(8, 10, 3), 8).unwrap();
        let segment = noise_segment(8, 10, 3, None, 80);
        let a = model.extract_features(&segment).unwrap();
        let b = model.extract_features(&segment.clone()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.len(), model.architecture.feature_len());
        assert_eq!(a.model_id, model.id());
    }

    #[test]
    fn healthy_and_damaged_segments_yield_distinct_features() {
        let sources = mini_sources(2.0, 9);
        let healthy = sample_segments(&sources[0].healthy, 1.0, 1, 90).unwrap().remove(0);
        let damaged = sample_segments(&sources[0].damaged, 1.0, 1, 90).unwrap().remove(0);
        let arch = CnnArchitecture::extractor(16, 251, 1);
        let model = CnnModel::new(arch, 9).unwrap();
        let fh = model.extract_features(&healthy).unwrap();
        let fd = model.extract_features(&damaged).unwrap();
        let dist: f64 = fh
            .values
            .iter()
            .zip(&fd.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 0.0, "random-filter features must separate the classes' inputs");
    }

    #[test]
    fn batchnorm_calibration_standardizes_pooled_features() {
        let sources = mini_sources(3.0, 10);
        let singles = sample_segments(&sources[0].healthy, 1.0, 24, 100).unwrap();
        let stacked: Vec<_> = singles
            .chunks_exact(3)
            .map(|c| {
                stack_channels([c[0].clone(), c[1].clone(), c[2].clone()], [0, 0, 0]).unwrap()
            })
            .collect();
        let mut model = CnnModel::new(CnnArchitecture::extractor(16, 251, 3), 11).unwrap();
        model.fit_batchnorm(&stacked).unwrap();
        // Features of the calibration corpus are near zero mean, unit
        // variance per filter.
        let filters = 16;
        let mut sums = vec![0.0; filters];
        let mut sq = vec![0.0; filters];
        let mut rows = 0usize;
        for segment in &stacked {
            let features = model.extract_features(segment).unwrap();
            for row in features.values.chunks_exact(filters) {
                rows += 1;
                for (f, &v) in row.iter().enumerate() {
                    sums[f] += v;
                    sq[f] += v * v;
                }
            }
        }
        for f in 0..filters {
            let mean = sums[f] / rows as f64;
            let var = sq[f] / rows as f64 - mean * mean;
            assert!(mean.abs() < 1e-6, "filter {f} mean {mean}");
            assert!((var - 1.0).abs() < 1e-2, "filter {f} variance {var}");
        }
    }

    // --- determinism & persistence ---

    #[test]
    fn initialization_is_deterministic_per_seed() {
        let a = CnnModel::new(small_arch(), 12).unwrap();
        let b = CnnModel::new(small_arch(), 12).unwrap();
        assert_eq!(a, b);
        let c = CnnModel::new(small_arch(), 13).unwrap();
        assert_ne!(a.conv.weights, c.conv.weights);
    }

    #[test]
    fn checkpoint_round_trip_reproduces_inference_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cnn");
        let mut model = CnnModel::new(small_arch(), 14).unwrap();
        // Perturb the running stats the way a calibration would.
        let (segments, _) = batch3(140);
        model.fit_batchnorm(&segments).unwrap();
        model.save(&path).unwrap();
        let loaded = CnnModel::load(&path).unwrap();
        assert_eq!(model, loaded);
        let probe = vec![noise_segment(8, 10, 3, None, 141)];
        let a = model.forward_infer(&probe).unwrap();
        let b = loaded.forward_infer(&probe).unwrap();
        assert_eq!(a, b, "bit-identical probabilities after round trip");
        let fa = model.extract_features(&probe[0]).unwrap();
        let fb = loaded.extract_features(&probe[0]).unwrap();
        assert_eq!(fa.values, fb.values);
    }

    #[test]
    fn checkpoint_refuses_truncation_and_nonfinite_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cnn");
        let model = CnnModel::new(small_arch(), 15).unwrap();
        model.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(CnnModel::load(&path), Err(Error::Integrity(_))));

        // A payload of NaNs with a valid checksum must still be refused.
        let meta = CnnMeta {
            architecture: small_arch(),
            kernel: KERNEL,
            dense_units: DENSE_UNITS,
            outputs: OUTPUTS,
            dropout_rate: DROPOUT_RATE,
            init_seed: 0,
            trained_with: None,
            parameter_order: PAYLOAD_ORDER.iter().map(|s| s.to_string()).collect(),
        };
        let count: usize = model.payload_tensors().iter().map(|t| t.len()).sum();
        let mut payload = Vec::new();
        for _ in 0..count {
            payload.extend_from_slice(&f32::NAN.to_le_bytes());
        }
        let nan_path = dir.path().join("nan.cnn");
        write_container(&nan_path, KIND_CNN, &meta, &payload).unwrap();
        assert!(matches!(CnnModel::load(&nan_path), Err(Error::Data(_))));
    }

    #[test]
    fn verdicts_follow_the_half_threshold() {
        assert_eq!(verdicts(&[0.5, 0.499999, 0.9]), [1, 0, 1]);
        assert_eq!(verdicts(&[0.1, 0.2, 0.3]), [0, 0, 0]);
    }
}
