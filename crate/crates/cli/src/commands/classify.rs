//! `gearvib classify`: run the fault classifier over a segment file and
//! write per-segment probabilities and verdicts. When the bundle also
//! holds a stage-1 model, each diagnosis carries its signed anomaly score.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use gearvib::archive::load_segments;
use gearvib::diagnose::{
    load_pipeline, stage1_detect_batch, stage2_diagnose_batch, Diagnosis, PipelineBundle,
};
use gearvib::error::{Error, Result};

use crate::config::RunConfig;
use crate::shared::{diagnoses_csv, write_text};

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Bundle directory holding the stage-2 model, and optionally stage 1
    /// (default: <model_dir>/stage2).
    #[arg(long, value_name = "DIR")]
    pub model: Option<PathBuf>,
    /// Segment file to diagnose.
    #[arg(long, value_name = "FILE")]
    pub segments: PathBuf,
    /// Output CSV (default: <report_dir>/diagnoses.csv).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn run(config: &RunConfig, args: ClassifyArgs) -> Result<()> {
    let model_dir = args.model.unwrap_or_else(|| config.stage2_model_dir());
    let out = args.out.unwrap_or_else(|| config.report_dir.join("diagnoses.csv"));
    let bundle = load_pipeline(&model_dir)?;
    let diagnoses = execute(&bundle, &args.segments, &out, &model_dir)?;

    let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
    for d in &diagnoses {
        let key: String = d.verdicts.iter().map(|v| char::from(b'0' + v)).collect();
        *histogram.entry(key).or_insert(0) += 1;
    }
    println!("diagnosed {} segments; verdict histogram {histogram:?}", diagnoses.len());
    println!("diagnoses: {}", out.display());
    Ok(())
}

/// Diagnoses the segments in `segments_path` with the bundle's stage-2
/// model and writes the CSV to `out`. A stage-1 model in the same bundle
/// contributes signed scores; a bundle without stage 2 is refused.
pub fn execute(
    bundle: &PipelineBundle,
    segments_path: &Path,
    out: &Path,
    bundle_dir: &Path,
) -> Result<Vec<Diagnosis>> {
    let stage2 = bundle.stage2.as_ref().ok_or_else(|| {
        Error::Data(format!(
            "bundle {} holds no classification stage; use `gearvib detect` for anomaly scoring",
            bundle_dir.display()
        ))
    })?;
    let segments = load_segments(segments_path)?;
    let mut diagnoses = stage2_diagnose_batch(stage2, &segments)?;
    if let Some(stage1) = &bundle.stage1 {
        let detections = stage1_detect_batch(stage1, &segments)?;
        for (diagnosis, detection) in diagnoses.iter_mut().zip(&detections) {
            diagnosis.stage1_signed = Some(detection.signed);
        }
    }
    write_text(out, &diagnoses_csv(&diagnoses)?)?;
    Ok(diagnoses)
}
