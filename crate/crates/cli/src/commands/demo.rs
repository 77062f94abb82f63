//! `gearvib demo`: the whole pipeline in one command. Generates
//! recordings, builds spectrograms and datasets, trains both stages,
//! scores and diagnoses the test pools, evaluates, renders figures, and
//! writes a report tying every number to a persisted artifact.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use gearvib::diagnose::{save_pipeline, PipelineBundle};
use gearvib::error::Result;
use gearvib::siggen::SignalFormat;

use crate::config::RunConfig;
use crate::report::{demo_report, DemoReport, StepTiming};
use crate::shared::{binary_rates, write_text};

use super::dataset::{self, Sizes, StageArg};
use super::detect;
use super::evaluate;
use super::generate;
use super::render_cmd;
use super::spectrogram;
use super::stage1::{self, load_stage1};
use super::stage2;

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Base directory for all artifacts; its data/, models/, and reports/
    /// subdirectories replace the configured paths.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recording length override in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub duration_s: Option<f64>,
    /// Stage-2 instance total override.
    #[arg(long, value_name = "N")]
    pub stage2_total: Option<usize>,
    /// Stage-1 healthy training count override.
    #[arg(long, value_name = "N")]
    pub stage1_train: Option<usize>,
    /// Stage-1 test count override (applied to both test pools).
    #[arg(long, value_name = "N")]
    pub stage1_test: Option<usize>,
    /// Training epoch override.
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
}

pub fn run(config: &RunConfig, deterministic: bool, args: DemoArgs) -> Result<()> {
    let mut config = config.clone();
    if let Some(base) = &args.out {
        config.data_dir = base.join("data");
        config.model_dir = base.join("models");
        config.report_dir = base.join("reports");
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(duration) = args.duration_s {
        config.dataset.recording_duration_s = duration;
    }
    if let Some(total) = args.stage2_total {
        config.dataset.stage2_total = total;
    }
    if let Some(train) = args.stage1_train {
        config.dataset.stage1_train = train;
    }
    if let Some(test) = args.stage1_test {
        config.dataset.stage1_test_healthy = test;
        config.dataset.stage1_test_damaged = test;
    }
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    config.validate()?;

    let mut timings: Vec<StepTiming> = Vec::new();
    let mut artifacts: Vec<(String, String)> = Vec::new();
    let timed = |name: &'static str,
                     timings: &mut Vec<StepTiming>,
                     step: &mut dyn FnMut() -> Result<()>|
     -> Result<()> {
        let start = Instant::now();
        step()?;
        timings.push(StepTiming { name, elapsed: start.elapsed() });
        println!("[demo] {name} done in {:.2} s", timings.last().unwrap().elapsed.as_secs_f64());
        Ok(())
    };

    let rig = config.effective_rig();
    let recordings_dir = config.recordings_dir();
    let spectrograms_dir = config.spectrograms_dir();
    let dataset_dir = config.dataset_dir();
    let seed = config.seed;

    timed("generate recordings", &mut timings, &mut || {
        generate::execute(
            &rig,
            &recordings_dir,
            config.dataset.recording_duration_s,
            seed,
            SignalFormat::RawF32Le,
        )
        .map(|_| ())
    })?;
    artifacts.push(("recordings".to_string(), recordings_dir.display().to_string()));

    timed("build spectrograms", &mut timings, &mut || {
        spectrogram::execute(&recordings_dir, &spectrograms_dir, &config.stft).map(|_| ())
    })?;
    artifacts.push(("spectrograms".to_string(), spectrograms_dir.display().to_string()));

    timed("assemble datasets", &mut timings, &mut || {
        dataset::execute(
            &config,
            &spectrograms_dir,
            &dataset_dir,
            StageArg::Both,
            &Sizes::from_config(&config),
            seed,
        )
        .map(|_| ())
    })?;
    artifacts.push(("datasets".to_string(), dataset_dir.display().to_string()));

    let stage1_dir = config.stage1_model_dir();
    timed("train stage 1", &mut timings, &mut || {
        let segments = gearvib::archive::load_segments(&dataset_dir.join("stage1_train.seg"))?;
        let model = stage1::execute(
            &segments,
            gearvib::diagnose::ExtractorSource::SeededRandom {
                conv_filters: config.extractor_filters,
            },
            gearvib::diagnose::Stage1Scope::Joint,
            config.forest,
            seed,
        )?;
        save_pipeline(&PipelineBundle { stage1: Some(model), stage2: None }, &stage1_dir)
    })?;
    artifacts.push(("stage-1 bundle".to_string(), stage1_dir.display().to_string()));

    let stage1_model = load_stage1(&stage1_dir)?;
    let score_paths = [
        config.report_dir.join("scores_stage1_train.csv"),
        config.report_dir.join("scores_stage1_test_healthy.csv"),
        config.report_dir.join("scores_stage1_test_damaged.csv"),
    ];
    let segment_files = ["stage1_train.seg", "stage1_test_healthy.seg", "stage1_test_damaged.seg"];
    let mut flagged = [0usize; 3];
    let mut totals = [0usize; 3];
    timed("detect anomalies", &mut timings, &mut || {
        for i in 0..3 {
            let detections =
                detect::execute(&stage1_model, &dataset_dir.join(segment_files[i]), &score_paths[i])?;
            flagged[i] = detections.iter().filter(|d| d.is_anomalous).count();
            totals[i] = detections.len();
        }
        Ok(())
    })?;
    for (path, what) in score_paths.iter().zip([
        "stage-1 train scores",
        "stage-1 healthy test scores",
        "stage-1 damaged test scores",
    ]) {
        artifacts.push((what.to_string(), path.display().to_string()));
    }

    let stage2_dir = config.stage2_model_dir();
    let history_path = config.report_dir.join("train_history.csv");
    let mut final_validation_accuracy = None;
    timed("train stage 2", &mut timings, &mut || {
        let train = gearvib::archive::load_segments(&dataset_dir.join("stage2_train.seg"))?;
        let validation =
            gearvib::archive::load_segments(&dataset_dir.join("stage2_validation.seg"))?;
        let dataset = gearvib::spectro::LabeledDataset {
            train,
            validation,
            test: Vec::new(),
            ratios: config.dataset.ratios,
            seed,
        };
        let mut train_config = config.train.clone();
        train_config.seed = seed;
        let (model, history) = stage2::execute(&dataset, &train_config, config.classifier_filters)?;
        final_validation_accuracy = history.final_validation_accuracy();
        write_text(&history_path, &stage2::history_csv(&history)?)?;
        save_pipeline(&PipelineBundle { stage1: None, stage2: Some(model) }, &stage2_dir)
    })?;
    artifacts.push(("stage-2 bundle".to_string(), stage2_dir.display().to_string()));
    artifacts.push(("training history".to_string(), history_path.display().to_string()));

    // A combined bundle lets `classify` attach stage-1 scores to diagnoses.
    let pipeline_dir = config.pipeline_model_dir();
    let diagnoses_path = config.report_dir.join("diagnoses.csv");
    timed("classify test set", &mut timings, &mut || {
        let stage2_model = gearvib::diagnose::load_pipeline(&stage2_dir)?
            .stage2
            .expect("just saved with stage 2");
        let combined = PipelineBundle {
            stage1: Some(load_stage1(&stage1_dir)?),
            stage2: Some(stage2_model),
        };
        save_pipeline(&combined, &pipeline_dir)?;
        super::classify::execute(
            &combined,
            &dataset_dir.join("stage2_test.seg"),
            &diagnoses_path,
            &pipeline_dir,
        )
        .map(|_| ())
    })?;
    artifacts.push(("combined bundle".to_string(), pipeline_dir.display().to_string()));
    artifacts.push(("diagnoses".to_string(), diagnoses_path.display().to_string()));

    let metrics_csv = config.report_dir.join("metrics.csv");
    let metrics_txt = config.report_dir.join("metrics.txt");
    let mut metrics = None;
    timed("evaluate", &mut timings, &mut || {
        metrics = Some(evaluate::execute(
            &diagnoses_path,
            &dataset_dir.join("stage2_test.seg"),
            &metrics_csv,
            &metrics_txt,
        )?);
        Ok(())
    })?;
    artifacts.push(("metrics CSV".to_string(), metrics_csv.display().to_string()));
    artifacts.push(("metrics report".to_string(), metrics_txt.display().to_string()));
    let metrics = metrics.expect("evaluate step ran");

    let scores_figure = config.report_dir.join("figure_scores.svg");
    let segment_figure = config.report_dir.join("figure_segment.svg");
    timed("render figures", &mut timings, &mut || {
        render_cmd::render_scores(
            [&score_paths[0], &score_paths[1], &score_paths[2]],
            &scores_figure,
        )?;
        render_cmd::render_segment(&dataset_dir.join("stage2_test.seg"), 0, &segment_figure)
    })?;
    artifacts.push(("score figure".to_string(), scores_figure.display().to_string()));
    artifacts.push(("segment figure".to_string(), segment_figure.display().to_string()));

    // Stage-1 precision/recall over the held-out pools, damaged positive.
    let false_positives = flagged[1];
    let true_positives = flagged[2];
    let false_negatives = totals[2] - flagged[2];
    let (stage1_precision, stage1_recall) =
        binary_rates(true_positives, false_positives, false_negatives);

    let report_path = config.report_dir.join("report.txt");
    let report_text = demo_report(&DemoReport {
        seed,
        deterministic,
        config_echo: &config.echo_json(),
        timings: &timings,
        artifacts: &artifacts,
        stage1_train_total: totals[0],
        stage1_train_flagged: flagged[0],
        stage1_healthy_total: totals[1],
        stage1_healthy_flagged: flagged[1],
        stage1_damaged_total: totals[2],
        stage1_damaged_flagged: flagged[2],
        stage1_precision,
        stage1_recall,
        stage2_final_validation_accuracy: final_validation_accuracy,
        metrics: &metrics,
    });
    write_text(&report_path, &report_text)?;
    print!("{report_text}");
    println!("report: {}", report_path.display());
    Ok(())
}
