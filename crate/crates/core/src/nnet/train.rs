//! Adam optimization and the multi-label training loop.

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::layers::bce_loss;
use crate::nnet::model::{verdicts, CnnModel, Gradients, OUTPUTS, PARAM_NAMES};
use crate::seeding::derive_seed;
use crate::spectro::SpectrogramSegment;

/// Training-loop configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Full passes over the training partition.
    pub epochs: usize,
    /// Instances per optimizer step. A trailing batch of one instance is
    /// skipped (batch normalization needs at least two rows).
    pub batch_size: usize,
    /// Seed for the shuffle and dropout streams.
    pub seed: u64,
    /// Reshuffle the training partition each epoch.
    pub shuffle: bool,
    /// Adam step size α.
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            seed: 0,
            shuffle: true,
            learning_rate: 1e-3,
        }
    }
}

/// Adam first/second-moment accumulators for a fixed set of tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    /// Step size α.
    pub alpha: f64,
    /// First-moment decay β₁.
    pub beta1: f64,
    /// Second-moment decay β₂.
    pub beta2: f64,
    /// Denominator stabilizer ε.
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments for tensors of the given lengths, with the standard
    /// decay rates β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(shapes: &[usize], alpha: f64) -> AdamState {
        AdamState {
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Completed optimizer steps.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update: θ ← θ − α·m̂/(√v̂ + ε). `names` label the
    /// tensors in error messages.
    pub fn apply(
        &mut self,
        params: &mut [&mut Vec<f64>],
        grads: &Gradients,
        names: &[&str],
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.tensors.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.tensors.len()
            )));
        }
        for (t, grad) in grads.tensors.iter().enumerate() {
            if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
                let name = names.get(t).copied().unwrap_or("tensor");
                return Err(Error::Numeric(format!(
                    "non-finite gradient {bad} for parameter {name}"
                )));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (t, grad) in grads.tensors.iter().enumerate() {
            let (m, v) = (&mut self.m[t], &mut self.v[t]);
            for (i, (&g, p)) in grad.iter().zip(params[t].iter_mut()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                *p -= self.alpha * (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// One epoch's summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch's processed instances.
    pub train_loss: f64,
    /// Fraction of validation instances with all three labels correct.
    pub validation_subset_accuracy: Option<f64>,
    /// Per-label validation accuracy (ring gear, LSS bearing, HSS bearing).
    pub validation_label_accuracy: Option<[f64; OUTPUTS]>,
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// One entry per completed epoch.
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    /// Subset accuracy of the last epoch, when validation data was given.
    pub fn final_validation_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.validation_subset_accuracy)
    }
}

fn labels_of(segments: &[SpectrogramSegment], what: &str) -> Result<Vec<[u8; OUTPUTS]>> {
    segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.labels.ok_or_else(|| {
                Error::Data(format!("{what} segment {i} carries no labels"))
            })
        })
        .collect()
}

/// Per-label and subset accuracy of a model over labeled segments,
/// evaluated in inference mode in chunks.
pub fn accuracy(
    model: &CnnModel,
    segments: &[SpectrogramSegment],
    labels: &[[u8; OUTPUTS]],
) -> Result<(f64, [f64; OUTPUTS])> {
    if segments.is_empty() || segments.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} segments against {} label rows",
            segments.len(),
            labels.len()
        )));
    }
    let mut subset_hits = 0usize;
    let mut label_hits = [0usize; OUTPUTS];
    for (chunk, chunk_labels) in segments.chunks(256).zip(labels.chunks(256)) {
        for (probs, truth) in model.forward_infer(chunk)?.iter().zip(chunk_labels) {
            let predicted = verdicts(probs);
            if predicted == *truth {
                subset_hits += 1;
            }
            for j in 0..OUTPUTS {
                if predicted[j] == truth[j] {
                    label_hits[j] += 1;
                }
            }
        }
    }
    let n = segments.len() as f64;
    let mut per_label = [0.0; OUTPUTS];
    for j in 0..OUTPUTS {
        per_label[j] = label_hits[j] as f64 / n;
    }
    Ok((subset_hits as f64 / n, per_label))
}

/// Trains the model in place with Adam on mean binary cross-entropy,
/// recording per-epoch loss and validation accuracy. Deterministic per
/// seed; parameters are snapped to f32 precision when training completes.
pub fn train_multilabel(
    model: &mut CnnModel,
    train: &[SpectrogramSegment],
    validation: &[SpectrogramSegment],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    if cfg.epochs == 0 {
        return Err(Error::Config("training needs at least one epoch".to_string()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".to_string()));
    }
    if train.is_empty() {
        return Err(Error::Data("training partition is empty".to_string()));
    }
    let train_labels = labels_of(train, "training")?;
    let validation_labels = labels_of(validation, "validation")?;
    for (i, segment) in train.iter().chain(validation.iter()).enumerate() {
        if !segment.shape_matches(&train[0]) {
            return Err(Error::Shape(format!(
                "segment {i} does not match the first training segment's shape"
            )));
        }
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "train/shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "train/dropout"));
    let mut adam = AdamState::new(&model.param_shapes(), cfg.learning_rate);
    let mut history = TrainHistory::default();
    let mut indices: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            indices.shuffle(&mut shuffle_rng);
        }
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for (batch_no, batch) in indices.chunks(cfg.batch_size).enumerate() {
            if batch.len() < 2 {
                continue;
            }
            let segments: Vec<&SpectrogramSegment> = batch.iter().map(|&i| &train[i]).collect();
            let labels: Vec<[u8; OUTPUTS]> = batch.iter().map(|&i| train_labels[i]).collect();
            let (probs, cache) = model.forward_train(&segments, &mut dropout_rng)?;
            let flat: Vec<f64> = labels.iter().flatten().map(|&l| f64::from(l)).collect();
            let loss = bce_loss(&probs, &flat)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch}, batch {}",
                    batch_no + 1
                )));
            }
            loss_sum += loss * batch.len() as f64;
            loss_count += batch.len();
            let grads = model.backward(&cache, &labels)?;
            adam.apply(&mut model.params_mut(), &grads, &PARAM_NAMES).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!(
                    "{msg} at epoch {epoch}, batch {}",
                    batch_no + 1
                )),
                other => other,
            })?;
        }
        if loss_count == 0 {
            return Err(Error::Data(format!(
                "no trainable batches: {} instances at batch size {} leave only \
                 single-instance batches",
                train.len(),
                cfg.batch_size
            )));
        }
        let (subset, per_label) = if validation.is_empty() {
            (None, None)
        } else {
            let (s, p) = accuracy(model, validation, &validation_labels)?;
            (Some(s), Some(p))
        };
        history.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / loss_count as f64,
            validation_subset_accuracy: subset,
            validation_label_accuracy: per_label,
        });
    }

    model.snap_params();
    model.trained_with = Some(*cfg);
    Ok(history)
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{mini_labeled_dataset, noise_segment};

    // --- Adam ---

    #[test]
    fn first_step_moves_by_alpha_against_the_gradient() {
        let mut adam = AdamState::new(&[1], 1e-3);
        let mut theta = vec![0.0];
        let grads = Gradients { tensors: vec![vec![1.0]] };
        adam.apply(&mut [&mut theta], &grads, &["theta"]).unwrap();
        assert!(
            (theta[0] + 1e-3).abs() < 1e-6 * 1e-3,
            "bias correction makes the first step −α, got {}",
            theta[0]
        );
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = AdamState::new(&[3], 1e-3);
        let mut theta = vec![0.25, -1.5, 7.0];
        let grads = Gradients { tensors: vec![vec![0.0; 3]] };
        for _ in 0..5 {
            adam.apply(&mut [&mut theta], &grads, &["theta"]).unwrap();
        }
        assert_eq!(theta, vec![0.25, -1.5, 7.0]);
    }

    #[test]
    fn three_steps_match_a_scalar_reference() {
        let mut adam = AdamState::new(&[1], 1e-3);
        let mut theta = vec![0.3];
        for _ in 0..3 {
            let grads = Gradients { tensors: vec![vec![1.0]] };
            adam.apply(&mut [&mut theta], &grads, &["theta"]).unwrap();
        }
        // Independent scalar recurrence with the same constants.
        let (alpha, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
        let (mut m, mut v, mut x) = (0.0, 0.0, 0.3);
        for t in 1..=3 {
            let g: f64 = 1.0;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mhat = m / (1.0 - b1_pow(b1, t));
            let vhat = v / (1.0 - b1_pow(b2, t));
            x -= alpha * mhat / (vhat.sqrt() + eps);
        }
        assert!((theta[0] - x).abs() < 1e-12, "{} vs {x}", theta[0]);

        fn b1_pow(b: f64, t: u32) -> f64 {
            let mut acc = 1.0;
            for _ in 0..t {
                acc *= b;
            }
            acc
        }
    }

    #[test]
    fn nonfinite_gradient_is_refused_by_name() {
        let mut adam = AdamState::new(&[2], 1e-3);
        let mut theta = vec![0.0, 0.0];
        let grads = Gradients { tensors: vec![vec![1.0, f64::NAN]] };
        let err = adam.apply(&mut [&mut theta], &grads, &["conv_weights"]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("conv_weights"));
        assert_eq!(theta, vec![0.0, 0.0], "no partial update");
    }

    // --- training loop ---
    use crate::nnet::model::{CnnArchitecture, CnnModel};

    /// Balanced eight-combination dataset of noise grids where each set
    /// label lifts its channel plane well clear of the noise, so a
    /// correct training loop must separate it perfectly.
    fn planted_dataset(
        train_per_combo: usize,
        val_per_combo: usize,
        seed: u64,
    ) -> (Vec<SpectrogramSegment>, Vec<SpectrogramSegment>) {
        let (frames, bins) = (10usize, 24usize);
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for combo in 0..8u8 {
            let labels = [combo & 1, (combo >> 1) & 1, (combo >> 2) & 1];
            for i in 0..train_per_combo + val_per_combo {
                let mut seg = noise_segment(
                    frames,
                    bins,
                    3,
                    Some(labels),
                    derive_seed(seed, &format!("planted/{combo}/{i}")),
                );
                for c in 0..3 {
                    if labels[c] == 1 {
                        for t in 0..frames {
                            for b in 0..bins {
                                seg.magnitudes[(t * bins + b) * 3 + c] += 3.0;
                            }
                        }
                    }
                }
                if i < train_per_combo {
                    train.push(seg);
                } else {
                    validation.push(seg);
                }
            }
        }
        (train, validation)
    }

    fn trained_planted(
        seed: u64,
        cfg: &TrainConfig,
    ) -> (CnnModel, TrainHistory, Vec<SpectrogramSegment>) {
        let (train, validation) = planted_dataset(160, 8, seed);
        let arch = CnnArchitecture::classifier(10, 24, 3);
        let mut model = CnnModel::new(arch, derive_seed(seed, "model")).unwrap();
        let history = train_multilabel(&mut model, &train, &validation, cfg).unwrap();
        (model, history, validation)
    }

    #[test]
    fn separable_dataset_reaches_perfect_validation_accuracy() {
        let cfg = TrainConfig::default();
        let (model, history, held_out) = trained_planted(42, &cfg);
        assert_eq!(history.epochs.len(), 20);
        assert_eq!(history.final_validation_accuracy(), Some(1.0));
        let labels: Vec<[u8; 3]> = held_out.iter().map(|s| s.labels.unwrap()).collect();
        let (subset, per_label) = accuracy(&model, &held_out, &labels).unwrap();
        assert_eq!(subset, 1.0, "held-out subset accuracy");
        assert_eq!(per_label, [1.0; 3]);

        // Smoothed (window 3) training loss is nonincreasing on separable
        // data.
        let losses: Vec<f64> = history.epochs.iter().map(|e| e.train_loss).collect();
        let smoothed: Vec<f64> = losses.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
        for pair in smoothed.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "smoothed loss rose: {pair:?}");
        }
    }

    #[test]
    fn batch_sixteen_matches_batch_thirty_two_accuracy() {
        let (model_a, _, held_out) = trained_planted(7, &TrainConfig::default());
        let cfg16 = TrainConfig { batch_size: 16, ..TrainConfig::default() };
        let (model_b, _, _) = trained_planted(7, &cfg16);
        let labels: Vec<[u8; 3]> = held_out.iter().map(|s| s.labels.unwrap()).collect();
        let (acc_a, _) = accuracy(&model_a, &held_out, &labels).unwrap();
        let (acc_b, _) = accuracy(&model_b, &held_out, &labels).unwrap();
        assert_eq!(acc_a, 1.0, "batch 32 accuracy");
        assert_eq!(acc_b, 1.0, "batch 16 accuracy");
    }

    #[test]
    fn training_is_bit_deterministic_per_seed() {
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let (model_a, history_a, _) = trained_planted(11, &cfg);
        let (model_b, history_b, _) = trained_planted(11, &cfg);
        assert_eq!(model_a, model_b, "identical parameters bit for bit");
        assert_eq!(history_a, history_b);
    }

    #[test]
    fn zero_epochs_is_refused() {
        let dataset = mini_labeled_dataset(16, 3);
        let mut model = CnnModel::new(CnnArchitecture::classifier(16, 251, 3), 3).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(
            train_multilabel(&mut model, &dataset.train, &dataset.validation, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nan_parameters_abort_with_the_batch_position() {
        let dataset = mini_labeled_dataset(16, 4);
        let mut model = CnnModel::new(CnnArchitecture::classifier(16, 251, 3), 4).unwrap();
        model.conv.weights[0] = f64::NAN;
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let err = train_multilabel(&mut model, &dataset.train, &dataset.validation, &cfg)
            .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("epoch 1"), "{err}");
    }

    #[test]
    fn unlabeled_segments_are_refused() {
        let dataset = mini_labeled_dataset(16, 5);
        let mut unlabeled = dataset.train.clone();
        unlabeled[0].labels = None;
        let mut model = CnnModel::new(CnnArchitecture::classifier(16, 251, 3), 5).unwrap();
        assert!(matches!(
            train_multilabel(&mut model, &unlabeled, &[], &TrainConfig::default()),
            Err(Error::Data(_))
        ));
    }
}
