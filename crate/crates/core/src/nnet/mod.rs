//! A small convolutional network with hand-derived gradients.
//!
//! The stack is fixed: valid 3×3 convolution (4 or 16 filters) → 2×2 max
//! pool → per-filter batch normalization → ReLU → flatten → dropout
//! (training only) → 4-unit dense layer → ReLU → 3-unit sigmoid output.
//! Training minimizes mean binary cross-entropy with Adam; every layer's
//! backward pass is exact, which the test suite pins against central
//! finite differences.
//!
//! The same network serves two roles: trained end to end it is the
//! multi-label fault classifier; its front half (conv → pool →
//! batchnorm) doubles as the spectrogram feature extractor for anomaly
//! detection, either with seeded random filters calibrated by
//! [`CnnModel::fit_batchnorm`] or reusing a trained classifier's front
//! end.

mod layers;
mod model;
mod train;

pub use layers::{
    bce_loss, dropout_mask, maxpool2x2, maxpool2x2_backward, sigmoid, BatchNorm, BnCache,
    Conv2d, Dense, Grid3, BN_EPSILON, BN_MOMENTUM, KERNEL, PROB_CLAMP,
};
pub use model::{
    verdicts, CnnArchitecture, CnnModel, FeatureVector, Gradients, TrainCache, DENSE_UNITS,
    DROPOUT_RATE, FILTER_CHOICES, OUTPUTS, PARAM_NAMES,
};
pub(crate) use model::segment_identity;
pub use train::{accuracy, train_multilabel, AdamState, EpochStats, TrainConfig, TrainHistory};
