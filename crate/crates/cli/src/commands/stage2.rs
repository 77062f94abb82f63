//! `gearvib train-stage2`: train the multi-label fault classifier and save
//! it as a model bundle together with its per-epoch history.

use std::path::PathBuf;

use clap::Args;
use gearvib::archive::load_segments;
use gearvib::diagnose::{save_pipeline, stage2_train, PipelineBundle};
use gearvib::error::{Error, Result};
use gearvib::nnet::{CnnArchitecture, CnnModel, TrainConfig, TrainHistory};
use gearvib::spectro::LabeledDataset;

use crate::config::{RunConfig, FILTER_CHOICES};
use crate::shared::{finish_csv, write_text};

#[derive(Debug, Args)]
pub struct TrainStage2Args {
    /// Directory holding stage2_train.seg and stage2_validation.seg
    /// (default: <data_dir>/dataset).
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Bundle directory to write (default: <model_dir>/stage2).
    #[arg(long, value_name = "DIR")]
    pub model_out: Option<PathBuf>,
    /// Convolution filters (4 or 16; default from the config).
    #[arg(long, value_name = "N")]
    pub filters: Option<usize>,
    /// Epoch count override.
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Batch size override.
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training-history CSV (default: <report_dir>/train_history.csv).
    #[arg(long, value_name = "FILE")]
    pub history_out: Option<PathBuf>,
}

pub fn run(config: &RunConfig, args: TrainStage2Args) -> Result<()> {
    let dataset_dir = args.dataset.unwrap_or_else(|| config.dataset_dir());
    let model_out = args.model_out.unwrap_or_else(|| config.stage2_model_dir());
    let history_out =
        args.history_out.unwrap_or_else(|| config.report_dir.join("train_history.csv"));
    let filters = args.filters.unwrap_or(config.classifier_filters);
    if !FILTER_CHOICES.contains(&filters) {
        return Err(Error::Config(format!(
            "--filters must be one of {FILTER_CHOICES:?}, got {filters}"
        )));
    }
    let mut train_config = config.train.clone();
    train_config.seed = args.seed.unwrap_or(config.seed);
    if let Some(epochs) = args.epochs {
        train_config.epochs = epochs;
    }
    if let Some(batch) = args.batch_size {
        train_config.batch_size = batch;
    }

    let train = load_segments(&dataset_dir.join("stage2_train.seg"))?;
    let validation_path = dataset_dir.join("stage2_validation.seg");
    let validation =
        if validation_path.exists() { load_segments(&validation_path)? } else { Vec::new() };
    let dataset = LabeledDataset {
        train,
        validation,
        test: Vec::new(),
        ratios: config.dataset.ratios,
        seed: train_config.seed,
    };

    let (model, history) = execute(&dataset, &train_config, filters)?;
    write_text(&history_out, &history_csv(&history)?)?;
    save_pipeline(&PipelineBundle { stage1: None, stage2: Some(model) }, &model_out)?;
    match history.final_validation_accuracy() {
        Some(acc) => println!(
            "trained stage 2 for {} epochs; final validation subset accuracy {acc}",
            history.epochs.len()
        ),
        None => println!(
            "trained stage 2 for {} epochs (no validation split provided)",
            history.epochs.len()
        ),
    }
    println!("stage-2 bundle: {}", model_out.display());
    println!("training history: {}", history_out.display());
    Ok(())
}

/// Trains the classifier with the architecture sized from the first
/// training segment.
pub fn execute(
    dataset: &LabeledDataset,
    train_config: &TrainConfig,
    filters: usize,
) -> Result<(CnnModel, TrainHistory)> {
    let first = dataset.train.first().ok_or_else(|| {
        Error::Data("stage-2 training needs a non-empty training split".to_string())
    })?;
    let architecture = CnnArchitecture {
        conv_filters: filters,
        ..CnnArchitecture::classifier(first.frames, first.bins, first.channels)
    };
    stage2_train(dataset, train_config, &architecture)
}

/// Renders a training history as CSV, one row per epoch. Validation
/// columns are empty when no validation split was given.
pub fn history_csv(history: &TrainHistory) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Row {
        epoch: usize,
        train_loss: f64,
        validation_subset_accuracy: Option<f64>,
        ring_gear_accuracy: Option<f64>,
        lss_bearing_accuracy: Option<f64>,
        hss_bearing_accuracy: Option<f64>,
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    for e in &history.epochs {
        writer
            .serialize(Row {
                epoch: e.epoch,
                train_loss: e.train_loss,
                validation_subset_accuracy: e.validation_subset_accuracy,
                ring_gear_accuracy: e.validation_label_accuracy.map(|a| a[0]),
                lss_bearing_accuracy: e.validation_label_accuracy.map(|a| a[1]),
                hss_bearing_accuracy: e.validation_label_accuracy.map(|a| a[2]),
            })
            .map_err(|e| Error::Data(format!("cannot render history row: {e}")))?;
    }
    finish_csv(writer)
}
