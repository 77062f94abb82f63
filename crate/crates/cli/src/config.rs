//! Run configuration: one JSON file controls seeds, paths, preprocessing,
//! training, and dataset sizes for every subcommand.
//!
//! Precedence for locating the file: the `--config` flag, then the
//! `GEARVIB_CONFIG` environment variable, then built-in defaults. All
//! sub-seeds derive from the single master seed via
//! [`gearvib::seeding::derive_seed`], so one number pins an entire run.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use gearvib::error::{Error, Result};
use gearvib::iforest::ForestConfig;
use gearvib::nnet::TrainConfig;
use gearvib::siggen::RigProfile;
use gearvib::spectro::{MixPolicy, StftConfig};
use serde::{Deserialize, Serialize};

/// Environment variable holding the default config path.
pub const CONFIG_ENV: &str = "GEARVIB_CONFIG";

/// Filter counts the network layer supports well; other values train but
/// are outside the validated envelope, so the config rejects them.
pub const FILTER_CHOICES: [usize; 2] = [4, 16];

/// Top-level run configuration. Every field has a default, so an empty
/// JSON object (or no config file at all) is a valid configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; all stage and shuffle seeds derive from it.
    pub seed: u64,
    /// Directory for recordings, spectrograms, and datasets.
    pub data_dir: PathBuf,
    /// Directory for trained model bundles.
    pub model_dir: PathBuf,
    /// Directory for score files, metrics, figures, and reports.
    pub report_dir: PathBuf,
    /// Test-rig description; `null` means the built-in three-component rig.
    pub rig: Option<RigProfile>,
    /// Spectrogram preprocessing parameters.
    pub stft: StftConfig,
    /// Stage-2 training parameters. The nested `seed` is ignored: the
    /// effective training seed always derives from the run seed.
    pub train: TrainConfig,
    /// Isolation-forest parameters. The nested `seed` is ignored the same
    /// way.
    pub forest: ForestConfig,
    /// Dataset assembly sizes and splits.
    pub dataset: DatasetConfig,
    /// Convolution filters in the stage-2 classifier (4 or 16).
    pub classifier_filters: usize,
    /// Convolution filters in the stage-1 feature extractor (4 or 16).
    pub extractor_filters: usize,
}

/// Dataset sizes, splits, and segment geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Length of each generated recording in seconds.
    pub recording_duration_s: f64,
    /// Segment length in seconds.
    pub segment_duration_s: f64,
    /// Total stage-2 instances before the train/validation/test split.
    pub stage2_total: usize,
    /// Train : validation : test ratio.
    pub ratios: (u32, u32, u32),
    /// Per-channel or whole-gearbox label mixing.
    pub mixing: MixPolicy,
    /// Healthy training instances for stage 1.
    pub stage1_train: usize,
    /// Held-out healthy test instances for stage 1.
    pub stage1_test_healthy: usize,
    /// All-damaged test instances for stage 1.
    pub stage1_test_damaged: usize,
    /// Total stage-2 instances per sweep pipeline run; kept smaller than
    /// `stage2_total` so multi-value sweeps stay fast.
    pub sweep_total: usize,
}

impl Default for DatasetConfig {
    /// Desk-scale defaults: an 8000/1000/1000 stage-2 split and a
    /// 2000/250/250 stage-1 split.
    fn default() -> Self {
        DatasetConfig {
            recording_duration_s: 120.0,
            segment_duration_s: 1.0,
            stage2_total: 10_000,
            ratios: (8, 1, 1),
            mixing: MixPolicy::PerChannel,
            stage1_train: 2000,
            stage1_test_healthy: 250,
            stage1_test_damaged: 250,
            sweep_total: 800,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data_dir: PathBuf::from("data"),
            model_dir: PathBuf::from("models"),
            report_dir: PathBuf::from("reports"),
            rig: None,
            stft: StftConfig::default(),
            train: TrainConfig::default(),
            forest: ForestConfig::default(),
            dataset: DatasetConfig::default(),
            classifier_filters: 4,
            extractor_filters: 16,
        }
    }
}

impl RunConfig {
    /// Loads the configuration from `flag`, falling back to the
    /// `GEARVIB_CONFIG` environment variable, then to defaults. Any
    /// problem with an explicitly named file (unreadable, malformed JSON,
    /// unknown or ill-typed fields) is a configuration error; the serde
    /// diagnostic names the offending field and position.
    pub fn load(flag: Option<&Path>) -> Result<RunConfig> {
        let env_path = env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        let path = match flag {
            Some(p) => Some(p.to_path_buf()),
            None => env_path,
        };
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("config file {}: {e}", path.display()))
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Structural checks beyond what serde enforces. Values that only a
    /// downstream fit would reject (for example contamination bounds) are
    /// left to the owning module, which reports them as configuration
    /// errors too.
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("classifier_filters", self.classifier_filters),
            ("extractor_filters", self.extractor_filters),
        ] {
            if !FILTER_CHOICES.contains(&v) {
                return Err(Error::Config(format!(
                    "{what} must be one of {FILTER_CHOICES:?}, got {v}"
                )));
            }
        }
        let d = &self.dataset;
        for (what, v) in [
            ("dataset.recording_duration_s", d.recording_duration_s),
            ("dataset.segment_duration_s", d.segment_duration_s),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{what} must be positive, got {v}")));
            }
        }
        for (what, v) in [
            ("dataset.stage2_total", d.stage2_total),
            ("dataset.stage1_train", d.stage1_train),
            ("dataset.stage1_test_healthy", d.stage1_test_healthy),
            ("dataset.stage1_test_damaged", d.stage1_test_damaged),
            ("dataset.sweep_total", d.sweep_total),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{what} must be at least 1")));
            }
        }
        if d.ratios == (0, 0, 0) {
            return Err(Error::Config("dataset.ratios must not all be zero".to_string()));
        }
        if let Some(rig) = &self.rig {
            rig.validate()?;
        }
        Ok(())
    }

    /// The rig to synthesize and analyze: the configured one or the
    /// built-in default.
    pub fn effective_rig(&self) -> RigProfile {
        self.rig.clone().unwrap_or_default()
    }

    /// Pretty-printed JSON echo for reports.
    pub fn echo_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn recordings_dir(&self) -> PathBuf {
        self.data_dir.join("recordings")
    }

    pub fn spectrograms_dir(&self) -> PathBuf {
        self.data_dir.join("spectrograms")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.data_dir.join("dataset")
    }

    pub fn stage1_model_dir(&self) -> PathBuf {
        self.model_dir.join("stage1")
    }

    pub fn stage2_model_dir(&self) -> PathBuf {
        self.model_dir.join("stage2")
    }

    pub fn pipeline_model_dir(&self) -> PathBuf {
        self.model_dir.join("pipeline")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass_validation() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn empty_json_object_is_the_default_config() {
        let parsed: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed.seed, RunConfig::default().seed);
        assert_eq!(parsed.dataset.stage2_total, 10_000);
        assert_eq!(parsed.classifier_filters, 4);
        assert_eq!(parsed.extractor_filters, 16);
    }

    #[test]
    fn unknown_fields_are_rejected_with_the_field_name() {
        let err = serde_json::from_str::<RunConfig>("{\"sede\": 3}").unwrap_err();
        assert!(err.to_string().contains("sede"), "{err}");
    }

    #[test]
    fn filter_counts_outside_the_envelope_are_rejected() {
        let mut config = RunConfig::default();
        config.classifier_filters = 5;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("classifier_filters"), "{err}");
    }

    #[test]
    fn zero_sizes_are_rejected() {
        let mut config = RunConfig::default();
        config.dataset.stage1_train = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_echo_round_trips() {
        let config = RunConfig::default();
        let parsed: RunConfig = serde_json::from_str(&config.echo_json()).unwrap();
        assert_eq!(parsed.dataset.ratios, config.dataset.ratios);
        assert_eq!(parsed.stft, config.stft);
    }
}
