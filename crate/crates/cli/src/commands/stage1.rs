//! `gearvib train-stage1`: fit the anomaly-detection stage (feature
//! extractor plus isolation forest) on healthy training segments and save
//! it as a model bundle.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gearvib::archive::load_segments;
use gearvib::diagnose::{
    load_pipeline, save_pipeline, stage1_detect_batch, stage1_train, ExtractorSource,
    PipelineBundle, Stage1Config, Stage1Model, Stage1Scope,
};
use gearvib::error::{Error, Result};
use gearvib::iforest::ForestConfig;
use gearvib::spectro::SpectrogramSegment;

use crate::config::{RunConfig, FILTER_CHOICES};

/// How the feature extractor is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Random convolution filters calibrated on the healthy data.
    SeededRandom,
    /// Reuse the trained front end of a stage-2 classifier.
    #[value(name = "reuse-stage2")]
    ReuseStage2,
}

/// Forest scope spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    /// One forest over features of all channels jointly.
    Joint,
    /// One forest per channel; a segment is anomalous if any channel is.
    PerChannel,
}

impl From<ScopeArg> for Stage1Scope {
    fn from(s: ScopeArg) -> Stage1Scope {
        match s {
            ScopeArg::Joint => Stage1Scope::Joint,
            ScopeArg::PerChannel => Stage1Scope::PerChannel,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainStage1Args {
    /// Directory holding stage1_train.seg (default: <data_dir>/dataset).
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Bundle directory to write (default: <model_dir>/stage1).
    #[arg(long, value_name = "DIR")]
    pub model_out: Option<PathBuf>,
    /// Feature-extractor source.
    #[arg(long, value_enum, default_value = "seeded-random")]
    pub mode: ModeArg,
    /// Convolution filters for the seeded-random extractor (4 or 16;
    /// default from the config).
    #[arg(long, value_name = "N")]
    pub filters: Option<usize>,
    /// Forest scope.
    #[arg(long, value_enum, default_value = "joint")]
    pub scope: ScopeArg,
    /// Bundle holding the stage-2 model to reuse (required with
    /// --mode reuse-stage2).
    #[arg(long, value_name = "DIR")]
    pub stage2_model: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(config: &RunConfig, args: TrainStage1Args) -> Result<()> {
    let dataset = args.dataset.unwrap_or_else(|| config.dataset_dir());
    let model_out = args.model_out.unwrap_or_else(|| config.stage1_model_dir());
    let seed = args.seed.unwrap_or(config.seed);
    let filters = args.filters.unwrap_or(config.extractor_filters);
    if !FILTER_CHOICES.contains(&filters) {
        return Err(Error::Config(format!(
            "--filters must be one of {FILTER_CHOICES:?}, got {filters}"
        )));
    }
    let train_path = dataset.join("stage1_train.seg");
    let segments = load_segments(&train_path)?;

    let stage2_bundle = match (args.mode, &args.stage2_model) {
        (ModeArg::ReuseStage2, Some(path)) => Some(load_pipeline(path)?),
        (ModeArg::ReuseStage2, None) => {
            return Err(Error::Config(
                "--mode reuse-stage2 requires --stage2-model <DIR>".to_string(),
            ))
        }
        (ModeArg::SeededRandom, _) => None,
    };
    let extractor = match &stage2_bundle {
        Some(bundle) => {
            let model = bundle.stage2.as_ref().ok_or_else(|| {
                Error::Data(format!(
                    "bundle {} holds no classification stage to reuse",
                    args.stage2_model.as_ref().expect("checked above").display()
                ))
            })?;
            ExtractorSource::Stage2(model)
        }
        None => ExtractorSource::SeededRandom { conv_filters: filters },
    };

    let model = execute(&segments, extractor, args.scope.into(), config.forest, seed)?;
    let detections = stage1_detect_batch(&model, &segments)?;
    let flagged = detections.iter().filter(|d| d.is_anomalous).count();
    let min_signed = detections.iter().map(|d| d.signed).fold(f64::INFINITY, f64::min);
    save_pipeline(
        &PipelineBundle { stage1: Some(model), stage2: None },
        &model_out,
    )?;
    println!(
        "trained stage 1 on {} healthy segments; {flagged} flagged at fit time \
         (minimum signed score {min_signed})",
        segments.len()
    );
    println!("stage-1 bundle: {}", model_out.display());
    Ok(())
}

/// Fits the stage-1 model. The forest's own seed field is ignored; every
/// sub-seed derives from `seed`.
pub fn execute(
    segments: &[SpectrogramSegment],
    extractor: ExtractorSource<'_>,
    scope: Stage1Scope,
    forest: ForestConfig,
    seed: u64,
) -> Result<Stage1Model> {
    stage1_train(segments, &Stage1Config { extractor, scope, forest, seed })
}

/// Loads the stage-1 model out of a bundle directory, rejecting bundles
/// that lack one.
pub fn load_stage1(bundle_dir: &Path) -> Result<Stage1Model> {
    let bundle = load_pipeline(bundle_dir)?;
    bundle.stage1.ok_or_else(|| {
        Error::Data(format!(
            "bundle {} holds no anomaly-detection stage",
            bundle_dir.display()
        ))
    })
}
