//! `gearvib build-dataset`: cut labeled segment datasets out of the six
//! source spectrograms, for either or both pipeline stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gearvib::archive::{load_spectrogram, save_segments};
use gearvib::error::{Error, Result};
use gearvib::seeding::derive_seed;
use gearvib::siggen::Health;
use gearvib::spectro::{
    assemble_dataset, assemble_stage1_dataset, BuildReport, ComponentSources, DatasetSpec,
    LabeledDataset, Stage1Dataset, Stage1Spec,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::shared::{ensure_dir, read_spectrograms_manifest, write_json};

/// Which stage's dataset to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    /// Healthy-only training pool plus labeled test pools.
    #[value(name = "1")]
    Stage1,
    /// Multi-label train/validation/test split.
    #[value(name = "2")]
    Stage2,
    /// Both datasets.
    Both,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Directory holding the spectrograms and their manifest
    /// (default: <data_dir>/spectrograms).
    #[arg(long, value_name = "DIR")]
    pub spectrograms: Option<PathBuf>,
    /// Output directory (default: <data_dir>/dataset).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Which dataset(s) to assemble.
    #[arg(long, value_enum, default_value = "both")]
    pub stage: StageArg,
    /// Total stage-2 instances override.
    #[arg(long, value_name = "N")]
    pub total: Option<usize>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Build diagnostics for both stages, persisted as `build_report.json`.
#[derive(Debug, Serialize)]
pub struct CombinedBuildReport {
    pub seed: u64,
    pub segment_duration_s: f64,
    pub stage1: Option<BuildReport>,
    pub stage2: Option<BuildReport>,
}

pub fn run(config: &RunConfig, args: BuildDatasetArgs) -> Result<()> {
    let spectrograms = args.spectrograms.unwrap_or_else(|| config.spectrograms_dir());
    let out = args.out.unwrap_or_else(|| config.dataset_dir());
    let seed = args.seed.unwrap_or(config.seed);
    let mut sizes = Sizes::from_config(config);
    if let Some(total) = args.total {
        sizes.stage2_total = total;
    }
    let report = execute(config, &spectrograms, &out, args.stage, &sizes, seed)?;
    if let Some(stage1) = &report.stage1 {
        println!(
            "stage-1 dataset: {} train / available unique offsets {}",
            sizes.stage1_train, stage1.available_unique_offsets
        );
        for w in &stage1.warnings {
            println!("  note: {w}");
        }
    }
    if let Some(stage2) = &report.stage2 {
        println!(
            "stage-2 dataset: {} instances, label histogram {:?}",
            stage2.instances, stage2.label_histogram
        );
        for w in &stage2.warnings {
            println!("  note: {w}");
        }
    }
    println!("dataset written to {}", out.display());
    Ok(())
}

/// Dataset sizes, extracted so `demo` and `sweep` can shrink them.
#[derive(Debug, Clone, Copy)]
pub struct Sizes {
    pub stage2_total: usize,
    pub stage1_train: usize,
    pub stage1_test_healthy: usize,
    pub stage1_test_damaged: usize,
}

impl Sizes {
    pub fn from_config(config: &RunConfig) -> Sizes {
        Sizes {
            stage2_total: config.dataset.stage2_total,
            stage1_train: config.dataset.stage1_train,
            stage1_test_healthy: config.dataset.stage1_test_healthy,
            stage1_test_damaged: config.dataset.stage1_test_damaged,
        }
    }
}

/// Loads the six source spectrograms in manifest channel order.
pub fn load_sources(spectrograms_dir: &Path) -> Result<Vec<ComponentSources>> {
    let manifest = read_spectrograms_manifest(spectrograms_dir)?;
    let mut by_key: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in &manifest.spectrograms {
        by_key.insert(
            format!("{}/{}", entry.component, entry.health),
            spectrograms_dir.join(&entry.file),
        );
    }
    let mut sources = Vec::new();
    for component in &manifest.components {
        let pick = |health: Health| -> Result<_> {
            let path = by_key.get(&format!("{component}/{health}")).ok_or_else(|| {
                Error::Data(format!(
                    "spectrogram manifest lists no {health} recording for component {component}"
                ))
            })?;
            load_spectrogram(path)
        };
        sources.push(ComponentSources {
            name: component.clone(),
            healthy: pick(Health::Healthy)?,
            damaged: pick(Health::Damaged)?,
        });
    }
    Ok(sources)
}

/// Assembles the requested dataset(s) in memory.
pub fn assemble(
    sources: &[ComponentSources],
    config: &RunConfig,
    stage: StageArg,
    sizes: &Sizes,
    seed: u64,
) -> Result<(Option<(Stage1Dataset, BuildReport)>, Option<(LabeledDataset, BuildReport)>)> {
    let stage1 = if matches!(stage, StageArg::Stage1 | StageArg::Both) {
        let spec = Stage1Spec {
            train_healthy: sizes.stage1_train,
            test_healthy: sizes.stage1_test_healthy,
            test_damaged: sizes.stage1_test_damaged,
            segment_duration_s: config.dataset.segment_duration_s,
            seed: derive_seed(seed, "dataset/stage1"),
        };
        Some(assemble_stage1_dataset(sources, &spec)?)
    } else {
        None
    };
    let stage2 = if matches!(stage, StageArg::Stage2 | StageArg::Both) {
        let spec = DatasetSpec {
            total: sizes.stage2_total,
            ratios: config.dataset.ratios,
            segment_duration_s: config.dataset.segment_duration_s,
            seed: derive_seed(seed, "dataset/stage2"),
            mixing: config.dataset.mixing,
        };
        Some(assemble_dataset(sources, &spec)?)
    } else {
        None
    };
    Ok((stage1, stage2))
}

/// Assembles and persists the dataset files plus a build report.
pub fn execute(
    config: &RunConfig,
    spectrograms_dir: &Path,
    out: &Path,
    stage: StageArg,
    sizes: &Sizes,
    seed: u64,
) -> Result<CombinedBuildReport> {
    let sources = load_sources(spectrograms_dir)?;
    let (stage1, stage2) = assemble(&sources, config, stage, sizes, seed)?;
    ensure_dir(out)?;
    let mut report = CombinedBuildReport {
        seed,
        segment_duration_s: config.dataset.segment_duration_s,
        stage1: None,
        stage2: None,
    };
    if let Some((dataset, build)) = stage1 {
        save_segments(&out.join("stage1_train.seg"), &dataset.train)?;
        save_segments(&out.join("stage1_test_healthy.seg"), &dataset.test_healthy)?;
        save_segments(&out.join("stage1_test_damaged.seg"), &dataset.test_damaged)?;
        report.stage1 = Some(build);
    }
    if let Some((dataset, build)) = stage2 {
        save_segments(&out.join("stage2_train.seg"), &dataset.train)?;
        save_segments(&out.join("stage2_validation.seg"), &dataset.validation)?;
        save_segments(&out.join("stage2_test.seg"), &dataset.test)?;
        report.stage2 = Some(build);
    }
    write_json(&out.join("build_report.json"), &report)?;
    Ok(report)
}
