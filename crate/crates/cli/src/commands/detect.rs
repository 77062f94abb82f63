//! `gearvib detect`: score a segment file against a trained stage-1 model
//! and write the signed anomaly scores as CSV.

use std::path::{Path, PathBuf};

use clap::Args;
use gearvib::archive::load_segments;
use gearvib::diagnose::{stage1_detect_batch, Detection, Stage1Model};
use gearvib::error::Result;

use crate::config::RunConfig;
use crate::shared::{default_scores_path, scores_csv, write_text};

use super::stage1::load_stage1;

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Bundle directory holding the stage-1 model
    /// (default: <model_dir>/stage1).
    #[arg(long, value_name = "DIR")]
    pub model: Option<PathBuf>,
    /// Segment file to score.
    #[arg(long, value_name = "FILE")]
    pub segments: PathBuf,
    /// Output CSV (default: <report_dir>/scores_<stem>.csv).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn run(config: &RunConfig, args: DetectArgs) -> Result<()> {
    let model_dir = args.model.unwrap_or_else(|| config.stage1_model_dir());
    let out = args
        .out
        .unwrap_or_else(|| default_scores_path(&config.report_dir, &args.segments));
    let model = load_stage1(&model_dir)?;
    let detections = execute(&model, &args.segments, &out)?;
    let flagged = detections.iter().filter(|d| d.is_anomalous).count();
    let (lo, hi) = detections.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
        (lo.min(d.signed), hi.max(d.signed))
    });
    println!(
        "{flagged} of {} segments flagged as anomalous; signed scores in [{lo}, {hi}]",
        detections.len()
    );
    println!("scores: {}", out.display());
    Ok(())
}

/// Scores the segments in `segments_path` and writes the CSV to `out`.
pub fn execute(
    model: &Stage1Model,
    segments_path: &Path,
    out: &Path,
) -> Result<Vec<Detection>> {
    let segments = load_segments(segments_path)?;
    let detections = stage1_detect_batch(model, &segments)?;
    write_text(out, &scores_csv(&detections)?)?;
    Ok(detections)
}
