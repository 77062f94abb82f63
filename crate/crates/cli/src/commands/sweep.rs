//! `gearvib sweep`: run the full two-stage pipeline once per value of one
//! swept dimension and tabulate the resulting metrics. Window sweeps also
//! emit the frequency/temporal resolution tradeoff table, which is pure
//! arithmetic and present even for values whose pipeline run is skipped.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use gearvib::diagnose::{
    stage1_detect_batch, stage1_train, stage2_train, ExtractorSource, Stage1Config, Stage1Scope,
};
use gearvib::error::{Error, Result};
use gearvib::nnet::{accuracy, CnnArchitecture, TrainConfig};
use gearvib::seeding::derive_seed;
use gearvib::siggen::load_timeseries;
use gearvib::spectro::{
    assemble_dataset, assemble_stage1_dataset, stft, ComponentSources, DatasetSpec, Spectrogram,
    Stage1Spec, StftConfig,
};
use serde::Serialize;

use crate::config::{RunConfig, FILTER_CHOICES};
use crate::report::VERSION;
use crate::shared::{
    binary_rates, ensure_dir, finish_csv, read_recordings_manifest, write_text, RecordingsManifest,
};

/// The swept dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DimensionArg {
    /// Analysis window length in seconds (hop scales proportionally).
    #[value(name = "window-s")]
    WindowS,
    /// Segment duration in seconds.
    #[value(name = "segment-duration-s")]
    SegmentDurationS,
    /// Training batch size.
    #[value(name = "batch-size")]
    BatchSize,
    /// Logarithmic amplitude on/off.
    #[value(name = "log-amplitude")]
    LogAmplitude,
    /// Classifier convolution filters (4 or 16).
    #[value(name = "architecture")]
    Architecture,
}

impl fmt::Display for DimensionArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DimensionArg::WindowS => "window-s",
            DimensionArg::SegmentDurationS => "segment-duration-s",
            DimensionArg::BatchSize => "batch-size",
            DimensionArg::LogAmplitude => "log-amplitude",
            DimensionArg::Architecture => "architecture",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dimension to sweep.
    #[arg(long, value_enum)]
    pub dimension: DimensionArg,
    /// Comma-separated values for the dimension (at least two).
    #[arg(long, value_name = "V1,V2,...")]
    pub values: String,
    /// Directory holding the recordings and their manifest
    /// (default: <data_dir>/recordings).
    #[arg(long, value_name = "DIR")]
    pub recordings: Option<PathBuf>,
    /// Stage-2 instances per run (default: dataset.sweep_total).
    #[arg(long, value_name = "N")]
    pub total: Option<usize>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: <report_dir>).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// One pipeline configuration derived from a swept value.
struct Variant {
    label: String,
    stft: StftConfig,
    train: TrainConfig,
    classifier_filters: usize,
    segment_duration_s: f64,
    /// Reason this variant's pipeline run is skipped (known before
    /// running); `None` means it runs.
    skip: Option<String>,
}

/// Outcome of one variant's pipeline run.
#[derive(Serialize)]
struct SweepRow {
    value: String,
    status: String,
    instances: Option<usize>,
    stage1_precision: Option<f64>,
    stage1_recall: Option<f64>,
    subset_accuracy: Option<f64>,
    ring_gear_accuracy: Option<f64>,
    lss_bearing_accuracy: Option<f64>,
    hss_bearing_accuracy: Option<f64>,
}

#[derive(Serialize)]
struct ResolutionRow {
    window_s: f64,
    bin_spacing_hz: f64,
    frames_per_s: f64,
    frames_per_minute: f64,
    status: String,
}

pub fn run(config: &RunConfig, args: SweepArgs) -> Result<()> {
    let recordings_dir = args.recordings.unwrap_or_else(|| config.recordings_dir());
    let out = args.out.unwrap_or_else(|| config.report_dir.clone());
    let seed = args.seed.unwrap_or(config.seed);
    let total = args.total.unwrap_or(config.dataset.sweep_total);

    // Parse and validate every value before touching any data, so an
    // invalid value fails the whole sweep up front.
    let raw_values: Vec<&str> =
        args.values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if raw_values.len() < 2 {
        return Err(Error::Config(format!(
            "a sweep needs at least two values, got {:?}",
            args.values
        )));
    }
    let mut variants: Vec<Variant> = raw_values
        .iter()
        .map(|v| parse_variant(config, args.dimension, v))
        .collect::<Result<_>>()?;

    let manifest = read_recordings_manifest(&recordings_dir)?;
    if args.dimension == DimensionArg::WindowS {
        mark_unrunnable_windows(&mut variants, manifest.rig.sample_rate_hz);
    }

    // The resolution tradeoff table is plain arithmetic over the window
    // lengths; it exists even for values whose run is skipped.
    if args.dimension == DimensionArg::WindowS {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for variant in &variants {
            writer
                .serialize(ResolutionRow {
                    window_s: variant.stft.window_s,
                    bin_spacing_hz: variant.stft.bin_spacing_hz(),
                    frames_per_s: 1.0 / variant.stft.hop_s,
                    frames_per_minute: 60.0 / variant.stft.hop_s,
                    status: variant.skip.clone().unwrap_or_else(|| "ok".to_string()),
                })
                .map_err(|e| Error::Data(format!("cannot render resolution row: {e}")))?;
        }
        ensure_dir(&out)?;
        write_text(&out.join("resolution.csv"), &finish_csv(writer)?)?;
    }

    let recordings = load_recordings(&recordings_dir, &manifest)?;
    let sizes = SweepSizes::for_total(total);

    let mut rows = Vec::new();
    for (index, variant) in variants.iter().enumerate() {
        let run_seed = derive_seed(seed, &format!("sweep/{}/{index}", args.dimension));
        let row = match &variant.skip {
            Some(reason) => SweepRow {
                value: variant.label.clone(),
                status: format!("skipped: {reason}"),
                instances: None,
                stage1_precision: None,
                stage1_recall: None,
                subset_accuracy: None,
                ring_gear_accuracy: None,
                lss_bearing_accuracy: None,
                hss_bearing_accuracy: None,
            },
            None => match run_variant(config, variant, &recordings, &sizes, run_seed) {
                Ok(outcome) => {
                    println!(
                        "{} = {}: subset accuracy {}, stage-1 precision {} recall {}",
                        args.dimension,
                        variant.label,
                        outcome.subset_accuracy,
                        outcome.stage1_precision,
                        outcome.stage1_recall
                    );
                    SweepRow {
                        value: variant.label.clone(),
                        status: "ok".to_string(),
                        instances: Some(outcome.instances),
                        stage1_precision: Some(outcome.stage1_precision),
                        stage1_recall: Some(outcome.stage1_recall),
                        subset_accuracy: Some(outcome.subset_accuracy),
                        ring_gear_accuracy: Some(outcome.per_label[0]),
                        lss_bearing_accuracy: Some(outcome.per_label[1]),
                        hss_bearing_accuracy: Some(outcome.per_label[2]),
                    }
                }
                Err(e) => {
                    println!("{} = {}: failed ({e})", args.dimension, variant.label);
                    SweepRow {
                        value: variant.label.clone(),
                        status: format!("failed: {e}"),
                        instances: None,
                        stage1_precision: None,
                        stage1_recall: None,
                        subset_accuracy: None,
                        ring_gear_accuracy: None,
                        lss_bearing_accuracy: None,
                        hss_bearing_accuracy: None,
                    }
                }
            },
        };
        if let Some(reason) = &variant.skip {
            println!("{} = {}: skipped ({reason})", args.dimension, variant.label);
        }
        rows.push(row);
    }

    ensure_dir(&out)?;
    let csv_path = out.join(format!("sweep_{}.csv", args.dimension));
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Data(format!("cannot render sweep row: {e}")))?;
    }
    write_text(&csv_path, &finish_csv(writer)?)?;

    let txt_path = out.join(format!("sweep_{}.txt", args.dimension));
    write_text(&txt_path, &sweep_report(config, &args.dimension, &rows, seed, total))?;

    println!("sweep table: {}", csv_path.display());
    println!("sweep report: {}", txt_path.display());
    Ok(())
}

/// Stage sizes of one sweep pipeline run, derived from the stage-2 total.
struct SweepSizes {
    stage2_total: usize,
    stage1_train: usize,
    stage1_test: usize,
}

impl SweepSizes {
    fn for_total(total: usize) -> SweepSizes {
        SweepSizes {
            stage2_total: total,
            stage1_train: (total / 4).max(32),
            stage1_test: (total / 16).max(16),
        }
    }
}

/// Flags window variants whose window or hop does not land on an integer
/// sample count at the recording rate; their pipeline runs are skipped but
/// their resolution rows remain.
fn mark_unrunnable_windows(variants: &mut [Variant], sample_rate_hz: f64) {
    for variant in variants {
        if variant.skip.is_some() {
            continue;
        }
        for (what, seconds) in [("window", variant.stft.window_s), ("hop", variant.stft.hop_s)] {
            let samples = seconds * sample_rate_hz;
            if (samples - samples.round()).abs() > 1e-6 || samples.round() < 1.0 {
                variant.skip = Some(format!(
                    "{what} of {seconds} s is {samples} samples at {sample_rate_hz} Hz; \
                     not an integer sample count"
                ));
                break;
            }
        }
    }
}

/// Parses one value string into a pipeline variant, or a configuration
/// error naming the dimension and the offending value.
fn parse_variant(config: &RunConfig, dimension: DimensionArg, value: &str) -> Result<Variant> {
    let mut variant = Variant {
        label: value.to_string(),
        stft: config.stft,
        train: config.train.clone(),
        classifier_filters: config.classifier_filters,
        segment_duration_s: config.dataset.segment_duration_s,
        skip: None,
    };
    let bad = |detail: String| Error::Config(format!("invalid {dimension} value {value:?}: {detail}"));
    match dimension {
        DimensionArg::WindowS => {
            let window: f64 =
                value.parse().map_err(|e| bad(format!("{e}")))?;
            if !(window > 0.0) {
                return Err(bad("window length must be positive".to_string()));
            }
            // Keep the window/hop ratio of the base configuration.
            variant.stft.window_s = window;
            variant.stft.hop_s = window * (config.stft.hop_s / config.stft.window_s);
            variant.label = format!("{window}");
        }
        DimensionArg::SegmentDurationS => {
            let duration: f64 = value.parse().map_err(|e| bad(format!("{e}")))?;
            if !(duration > 0.0) {
                return Err(bad("segment duration must be positive".to_string()));
            }
            variant.segment_duration_s = duration;
            variant.label = format!("{duration}");
        }
        DimensionArg::BatchSize => {
            let batch: usize = value.parse().map_err(|e| bad(format!("{e}")))?;
            if batch == 0 {
                return Err(bad("batch size must be at least 1".to_string()));
            }
            variant.train.batch_size = batch;
            variant.label = format!("{batch}");
        }
        DimensionArg::LogAmplitude => {
            let on = match value {
                "on" | "true" => true,
                "off" | "false" => false,
                _ => return Err(bad("expected on/off".to_string())),
            };
            variant.stft.log_amplitude = on;
            variant.label = if on { "on".to_string() } else { "off".to_string() };
        }
        DimensionArg::Architecture => {
            let filters: usize = value.parse().map_err(|e| bad(format!("{e}")))?;
            if !FILTER_CHOICES.contains(&filters) {
                return Err(bad(format!("filters must be one of {FILTER_CHOICES:?}")));
            }
            variant.classifier_filters = filters;
            variant.label = format!("{filters}");
        }
    }
    Ok(variant)
}

/// Raw recordings held in memory for the duration of the sweep.
struct LoadedRecordings {
    rig_components: Vec<String>,
    series: Vec<(String, gearvib::siggen::Health, gearvib::siggen::TimeSeries)>,
}

fn load_recordings(
    dir: &std::path::Path,
    manifest: &RecordingsManifest,
) -> Result<LoadedRecordings> {
    let mut series = Vec::new();
    for entry in &manifest.recordings {
        let mut ts =
            load_timeseries(&dir.join(&entry.file), manifest.format, manifest.rig.sample_rate_hz)?;
        ts.channel = entry.component.clone();
        ts.health = Some(entry.health);
        series.push((entry.component.clone(), entry.health, ts));
    }
    Ok(LoadedRecordings {
        rig_components: manifest.rig.components.iter().map(|c| c.name.clone()).collect(),
        series,
    })
}

struct VariantOutcome {
    instances: usize,
    stage1_precision: f64,
    stage1_recall: f64,
    subset_accuracy: f64,
    per_label: [f64; 3],
}

/// One full pipeline run: spectrograms, both datasets, both stages, both
/// evaluations, all in memory.
fn run_variant(
    config: &RunConfig,
    variant: &Variant,
    recordings: &LoadedRecordings,
    sizes: &SweepSizes,
    seed: u64,
) -> Result<VariantOutcome> {
    use gearvib::siggen::Health;

    let mut sources = Vec::new();
    for component in &recordings.rig_components {
        let find = |health: Health| -> Result<Spectrogram> {
            let (_, _, ts) = recordings
                .series
                .iter()
                .find(|(name, h, _)| name == component && *h == health)
                .ok_or_else(|| {
                    Error::Data(format!("no {health} recording for component {component}"))
                })?;
            stft(ts, &variant.stft)
        };
        sources.push(ComponentSources {
            name: component.clone(),
            healthy: find(Health::Healthy)?,
            damaged: find(Health::Damaged)?,
        });
    }

    // Stage 2: train on the labeled split and evaluate the test partition.
    let (dataset, _) = assemble_dataset(
        &sources,
        &DatasetSpec {
            total: sizes.stage2_total,
            ratios: config.dataset.ratios,
            segment_duration_s: variant.segment_duration_s,
            seed: derive_seed(seed, "dataset/stage2"),
            mixing: config.dataset.mixing,
        },
    )?;
    let first = dataset.train.first().ok_or_else(|| {
        Error::Data("sweep run produced an empty training split".to_string())
    })?;
    let architecture = CnnArchitecture {
        conv_filters: variant.classifier_filters,
        ..CnnArchitecture::classifier(first.frames, first.bins, first.channels)
    };
    let mut train_config = variant.train.clone();
    train_config.seed = seed;
    let (model, _) = stage2_train(&dataset, &train_config, &architecture)?;
    let labels: Vec<[u8; 3]> = dataset
        .test
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.labels.ok_or_else(|| Error::Data(format!("test segment {i} carries no labels")))
        })
        .collect::<Result<_>>()?;
    let (subset_accuracy, per_label) = accuracy(&model, &dataset.test, &labels)?;

    // Stage 1: healthy-only training, then detection on both test pools.
    let (stage1_data, _) = assemble_stage1_dataset(
        &sources,
        &Stage1Spec {
            train_healthy: sizes.stage1_train,
            test_healthy: sizes.stage1_test,
            test_damaged: sizes.stage1_test,
            segment_duration_s: variant.segment_duration_s,
            seed: derive_seed(seed, "dataset/stage1"),
        },
    )?;
    let stage1 = stage1_train(
        &stage1_data.train,
        &Stage1Config {
            extractor: ExtractorSource::SeededRandom { conv_filters: config.extractor_filters },
            scope: Stage1Scope::Joint,
            forest: config.forest,
            seed,
        },
    )?;
    let healthy = stage1_detect_batch(&stage1, &stage1_data.test_healthy)?;
    let damaged = stage1_detect_batch(&stage1, &stage1_data.test_damaged)?;
    let false_positives = healthy.iter().filter(|d| d.is_anomalous).count();
    let true_positives = damaged.iter().filter(|d| d.is_anomalous).count();
    let false_negatives = damaged.len() - true_positives;
    let (stage1_precision, stage1_recall) =
        binary_rates(true_positives, false_positives, false_negatives);

    Ok(VariantOutcome {
        instances: dataset.test.len(),
        stage1_precision,
        stage1_recall,
        subset_accuracy,
        per_label,
    })
}

fn sweep_report(
    config: &RunConfig,
    dimension: &DimensionArg,
    rows: &[SweepRow],
    seed: u64,
    total: usize,
) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "sweep report: {dimension}");
    let _ = writeln!(out, "{}", "-".repeat(14 + dimension.to_string().len()));
    let _ = writeln!(out, "gearvib version: {VERSION}");
    let _ = writeln!(out, "master seed: {seed} (per-run seeds derive as sweep/{dimension}/<index>)");
    let _ = writeln!(out, "stage-2 instances per run: {total}");
    let _ = writeln!(out, "segment duration: {} s (unless swept)", config.dataset.segment_duration_s);
    out.push('\n');
    for row in rows {
        match (&row.subset_accuracy, &row.stage1_precision, &row.stage1_recall) {
            (Some(acc), Some(p), Some(r)) => {
                let _ = writeln!(
                    out,
                    "{dimension} = {}: status {}, subset accuracy {acc}, per-label \
                     ({}, {}, {}), stage-1 precision {p} recall {r}",
                    row.value,
                    row.status,
                    row.ring_gear_accuracy.unwrap_or(f64::NAN),
                    row.lss_bearing_accuracy.unwrap_or(f64::NAN),
                    row.hss_bearing_accuracy.unwrap_or(f64::NAN),
                );
            }
            _ => {
                let _ = writeln!(out, "{dimension} = {}: {}", row.value, row.status);
            }
        }
    }
    if *dimension == DimensionArg::WindowS {
        out.push('\n');
        let _ = writeln!(
            out,
            "resolution.csv tabulates the frequency/temporal tradeoff: bin spacing \
             is 1/window_s and the frame rate is 1/hop_s (hop scales with the window)."
        );
    }
    out
}
